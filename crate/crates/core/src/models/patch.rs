use rand::Rng as _;
use serde::{Deserialize, Serialize};
use wastemap_nn::{build_network, Augment, LayerSpec, Network, Padding, Rng, Tensor};

use crate::dataengine::{PatchTensor, PATCH_CHANNELS, PATCH_SIZE};
use crate::error::{CoreError, Result};

use super::PREDICT_CHUNK;

/// Widths of the patch network: filters per convolutional round, units per
/// dense block, and the dense-block dropout rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatchArch {
    pub filters: [usize; 3],
    pub dense: [usize; 2],
    pub dropout: f32,
}

impl Default for PatchArch {
    fn default() -> Self {
        PatchArch {
            filters: [32, 64, 128],
            dense: [128, 64],
            dropout: 0.4,
        }
    }
}

impl PatchArch {
    /// Three rounds of (3 × [conv 3×3 → batchnorm → relu]) + 2×2 max pool,
    /// then two dense blocks and a sigmoid unit.
    pub fn specs(&self) -> Vec<LayerSpec> {
        let mut specs = Vec::new();
        let mut cin = PATCH_CHANNELS;
        for &f in &self.filters {
            for _ in 0..3 {
                specs.push(LayerSpec::conv2d(cin, f, [3, 3], Padding::Same));
                specs.push(LayerSpec::batch_norm(f));
                specs.push(LayerSpec::Relu);
                cin = f;
            }
            specs.push(LayerSpec::max_pool([2, 2]));
        }
        specs.push(LayerSpec::Flatten);
        // 28 → 14 → 7 → 3 after three floor-halving pools.
        let mut inputs = 3 * 3 * cin;
        for &units in &self.dense {
            specs.push(LayerSpec::dense(inputs, units));
            specs.push(LayerSpec::Relu);
            specs.push(LayerSpec::dropout(self.dropout));
            inputs = units;
        }
        specs.push(LayerSpec::dense(inputs, 1));
        specs.push(LayerSpec::Sigmoid);
        specs
    }
}

/// Scores (28, 28, 24) patches.
#[derive(Debug, Clone)]
pub struct PatchClassifier {
    pub net: Network,
}

pub fn make_patch_classifier(arch: &PatchArch, seed: u64) -> Result<PatchClassifier> {
    PatchClassifier::from_network(build_network(&PatchTensor::SHAPE, &arch.specs(), seed)?)
}

impl PatchClassifier {
    pub fn from_network(net: Network) -> Result<Self> {
        if net.input_shape() != PatchTensor::SHAPE || net.output_shape() != [1] {
            return Err(CoreError::InvalidInput(format!(
                "patch classifier must map {:?} to [1], got {:?} -> {:?}",
                PatchTensor::SHAPE,
                net.input_shape(),
                net.output_shape()
            )));
        }
        Ok(PatchClassifier { net })
    }

    /// Scores a `[N, 28, 28, 24]` batch with one forward pass per patch.
    pub fn score(&self, batch: &Tensor) -> Result<Vec<f32>> {
        Ok(self.net.predict(batch, PREDICT_CHUNK)?.into_data())
    }
}

/// Stacks patch tensors into a `[N, 28, 28, 24]` batch.
pub fn patch_batch<'a>(patches: impl IntoIterator<Item = &'a PatchTensor>) -> Tensor {
    let mut data = Vec::new();
    let mut n = 0;
    for p in patches {
        data.extend_from_slice(&p.values);
        n += 1;
    }
    Tensor::from_vec(&[n, PATCH_SIZE, PATCH_SIZE, PATCH_CHANNELS], data).expect("patch batch shape")
}

/// Applies dihedral element `k` (0..8) to a square HWC image of side `size`:
/// an optional horizontal reflection (k ≥ 4) followed by `k % 4` quarter turns.
pub fn dihedral(input: &[f32], size: usize, channels: usize, k: u8, out: &mut [f32]) {
    debug_assert_eq!(input.len(), size * size * channels);
    let last = size - 1;
    for y in 0..size {
        for x in 0..size {
            let (mut ty, mut tx) = (y, if k >= 4 { last - x } else { x });
            for _ in 0..k % 4 {
                (ty, tx) = (tx, last - ty);
            }
            let src = (y * size + x) * channels;
            let dst = (ty * size + tx) * channels;
            out[dst..dst + channels].copy_from_slice(&input[src..src + channels]);
        }
    }
}

/// Appends all 8 dihedral images of every sample: `[N, …] → [8N, …]`, with
/// the copies of sample `i` at rows `8i..8i + 8`.
pub fn expand_dihedral(batch: &Tensor, targets: &[f32]) -> Result<(Tensor, Vec<f32>)> {
    let shape = batch.sample_shape();
    if shape.len() != 3 || shape[0] != shape[1] {
        return Err(CoreError::InvalidInput(format!("dihedral expansion needs square HWC samples, got {shape:?}")));
    }
    let (size, channels) = (shape[0], shape[2]);
    let len = batch.sample_len();
    let n = batch.batch_len();
    let mut data = vec![0.0f32; 8 * n * len];
    for i in 0..n {
        for k in 0..8u8 {
            let off = (8 * i + k as usize) * len;
            dihedral(batch.sample(i), size, channels, k, &mut data[off..off + len]);
        }
    }
    let mut out_shape = vec![8 * n];
    out_shape.extend_from_slice(shape);
    let t = targets.iter().flat_map(|&t| [t; 8]).collect();
    Ok((Tensor::from_vec(&out_shape, data)?, t))
}

/// How training sees the dihedral group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AugmentMode {
    None,
    /// Every sample appears in all 8 orientations.
    Expand,
    /// Each draw of a sample gets one random orientation.
    #[default]
    Random,
}

/// Random dihedral transform per sample.
pub struct DihedralAugment {
    pub size: usize,
    pub channels: usize,
}

impl Augment for DihedralAugment {
    fn augment(&self, sample: &[f32], out: &mut [f32], rng: &mut Rng) {
        let k = rng.gen_range(0..8u8);
        dihedral(sample, self.size, self.channels, k, out);
    }
}
