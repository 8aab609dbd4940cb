//! Weight file container.
//!
//! ```text
//! magic        4 bytes   "WMNN"
//! version      u32 LE    currently 1
//! meta_len     u32 LE    byte length of the metadata block
//! metadata     UTF-8 JSON: input shape, seed, layer manifest, tensor table
//! payload      f32 LE    every tensor of the table, in table order
//! ```
//!
//! The tensor table lists, per layer, its trainable parameters followed by its
//! non-trainable state (batchnorm running statistics).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::layer::{Layer, LayerSpec};
use crate::network::Network;
use crate::tensor::Tensor;

pub const WEIGHTS_MAGIC: [u8; 4] = *b"WMNN";
pub const WEIGHTS_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    layer: usize,
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Metadata {
    input_shape: Vec<usize>,
    seed: u64,
    layers: Vec<LayerSpec>,
    tensors: Vec<TensorEntry>,
}

pub fn write_network<W: Write>(net: &Network<f32>, mut w: W) -> Result<()> {
    let mut tensors = Vec::new();
    for (i, layer) in net.layers().iter().enumerate() {
        for ((name, _), t) in layer.spec.param_shapes().into_iter().zip(&layer.params) {
            tensors.push(TensorEntry {
                layer: i,
                name: name.to_string(),
                shape: t.shape().to_vec(),
            });
        }
        for ((name, _), t) in layer.spec.state_shapes().into_iter().zip(&layer.state) {
            tensors.push(TensorEntry {
                layer: i,
                name: name.to_string(),
                shape: t.shape().to_vec(),
            });
        }
    }
    let meta = Metadata {
        input_shape: net.input_shape().to_vec(),
        seed: net.seed(),
        layers: net.specs(),
        tensors,
    };
    let meta = serde_json::to_vec(&meta).map_err(|e| NnError::Format(e.to_string()))?;
    w.write_all(&WEIGHTS_MAGIC)?;
    w.write_all(&WEIGHTS_VERSION.to_le_bytes())?;
    w.write_all(&(meta.len() as u32).to_le_bytes())?;
    w.write_all(&meta)?;
    for layer in net.layers() {
        for t in layer.params.iter().chain(&layer.state) {
            for v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_network<R: Read>(mut r: R) -> Result<Network<f32>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != WEIGHTS_MAGIC {
        return Err(NnError::Format(format!("bad magic {magic:?}")));
    }
    let version = read_u32(&mut r)?;
    if version != WEIGHTS_VERSION {
        return Err(NnError::Format(format!("unsupported version {version}")));
    }
    let meta_len = read_u32(&mut r)? as usize;
    let mut meta = vec![0u8; meta_len];
    r.read_exact(&mut meta)?;
    let meta: Metadata = serde_json::from_slice(&meta).map_err(|e| NnError::Format(e.to_string()))?;

    // Rebuild shapes from the manifest, then overwrite every tensor.
    let net = crate::network::build_network(&meta.input_shape, &meta.layers, meta.seed)?;
    let mut layers: Vec<Layer<f32>> = net.layers().to_vec();
    let mut slots: Vec<&mut Tensor<f32>> = layers
        .iter_mut()
        .flat_map(|l| l.params.iter_mut().chain(l.state.iter_mut()))
        .collect();
    if slots.len() != meta.tensors.len() {
        return Err(NnError::Format(format!(
            "manifest lists {} tensors, architecture has {}",
            meta.tensors.len(),
            slots.len()
        )));
    }
    for (slot, entry) in slots.iter_mut().zip(&meta.tensors) {
        if slot.shape() != entry.shape.as_slice() {
            return Err(NnError::Format(format!(
                "tensor {} of layer {} has shape {:?}, expected {:?}",
                entry.name,
                entry.layer,
                entry.shape,
                slot.shape()
            )));
        }
        let mut buf = vec![0u8; slot.len() * 4];
        r.read_exact(&mut buf)?;
        for (v, b) in slot.data_mut().iter_mut().zip(buf.chunks_exact(4)) {
            *v = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
        }
    }
    Ok(Network::from_parts(meta.input_shape, layers, meta.seed))
}

pub fn save_network(net: &Network<f32>, path: impl AsRef<Path>) -> Result<()> {
    write_network(net, BufWriter::new(File::create(path)?))
}

pub fn load_network(path: impl AsRef<Path>) -> Result<Network<f32>> {
    read_network(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{build_network, Mode, Padding};

    fn sample_net() -> Network<f32> {
        build_network(
            &[6, 6, 2],
            &[
                LayerSpec::conv2d(2, 3, [3, 3], Padding::Same),
                LayerSpec::batch_norm(3),
                LayerSpec::Relu,
                LayerSpec::max_pool([2, 2]),
                LayerSpec::Flatten,
                LayerSpec::dense(27, 1),
                LayerSpec::Sigmoid,
            ],
            42,
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let mut net = sample_net();
        // move running stats off their defaults
        let x = Tensor::from_vec(&[2, 6, 6, 2], (0..144).map(|v| (v as f32).sin()).collect()).unwrap();
        let trace = net.forward_trace(&x, Mode::Train, None).unwrap();
        net.update_running_stats(&trace);
        let mut buf = Vec::new();
        write_network(&net, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"WMNN");
        let back = read_network(buf.as_slice()).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let net = sample_net();
        let mut buf = Vec::new();
        write_network(&net, &mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_network(bad.as_slice()), Err(NnError::Format(_))));
        let short = &buf[..buf.len() - 3];
        assert!(read_network(short).is_err());
    }

    #[test]
    fn save_and_load_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.wmnn");
        let net = sample_net();
        save_network(&net, &path).unwrap();
        assert_eq!(load_network(&path).unwrap(), net);
    }
}
