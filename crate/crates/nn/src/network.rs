use rand::Rng as _;
use rayon::prelude::*;

use crate::error::{NnError, Result};
use crate::layer::{Cache, Layer, LayerSpec};
use crate::real::Real;
use crate::tensor::Tensor;
use crate::{rng_from_seed, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Dropout active (when an RNG is supplied), batchnorm on batch statistics.
    Train,
    /// Dropout is the identity, batchnorm uses running statistics.
    Infer,
}

/// An ordered stack of layers with materialized weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T: Real = f32> {
    input_shape: Vec<usize>,
    layers: Vec<Layer<T>>,
    seed: u64,
}

/// Activations recorded by [`Network::forward_trace`]; `activations[0]` is the
/// input and `activations[i + 1]` the output of layer `i`.
#[derive(Debug, Clone)]
pub struct Trace<T: Real> {
    pub activations: Vec<Tensor<T>>,
    pub(crate) caches: Vec<Cache<T>>,
}

impl<T: Real> Trace<T> {
    pub fn output(&self) -> &Tensor<T> {
        self.activations.last().expect("trace has the input at least")
    }
}

/// Parameter gradients, laid out like the network's parameters.
#[derive(Debug, Clone)]
pub struct Grads<T: Real> {
    pub per_layer: Vec<Vec<Tensor<T>>>,
}

impl<T: Real> Grads<T> {
    pub fn flat(&self) -> impl Iterator<Item = &Tensor<T>> {
        self.per_layer.iter().flatten()
    }
}

/// Builds a network for per-sample input shape `input_shape`, drawing weights
/// Glorot-uniform from `seed`. Biases and batchnorm shifts start at zero.
pub fn build_network(input_shape: &[usize], specs: &[LayerSpec], seed: u64) -> Result<Network<f32>> {
    let mut rng = rng_from_seed(seed);
    let mut shape = input_shape.to_vec();
    let mut layers = Vec::with_capacity(specs.len());
    for (index, spec) in specs.iter().enumerate() {
        spec.validate().map_err(|reason| NnError::InvalidLayer { index, reason })?;
        let out_shape = spec.output_shape(&shape).map_err(|reason| NnError::Composition {
            index,
            prev: describe_producer(specs, index, input_shape),
            layer: spec.describe(),
            reason,
        })?;
        let mut params = Vec::new();
        for (name, pshape) in spec.param_shapes() {
            let t = match name {
                "weight" => {
                    let (fan_in, fan_out) = spec.fans().expect("weighted layer has fans");
                    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt() as f32;
                    let len = pshape.iter().product();
                    let data = (0..len).map(|_| rng.gen_range(-limit..=limit)).collect();
                    Tensor::from_vec(&pshape, data)?
                }
                "gamma" => Tensor::filled(&pshape, 1.0),
                _ => Tensor::zeros(&pshape),
            };
            params.push(t);
        }
        let state = spec
            .state_shapes()
            .into_iter()
            .map(|(name, s)| {
                if name == "running_var" {
                    Tensor::filled(&s, 1.0)
                } else {
                    Tensor::zeros(&s)
                }
            })
            .collect();
        layers.push(Layer {
            spec: spec.clone(),
            in_shape: shape.clone(),
            out_shape: out_shape.clone(),
            params,
            state,
        });
        shape = out_shape;
    }
    Ok(Network {
        input_shape: input_shape.to_vec(),
        layers,
        seed,
    })
}

/// Names the nearest preceding layer that fixes the channel count, or the input.
fn describe_producer(specs: &[LayerSpec], index: usize, input_shape: &[usize]) -> String {
    specs[..index]
        .iter()
        .enumerate()
        .rev()
        .find(|(_, s)| s.produced_channels().is_some())
        .map(|(i, s)| format!("layer {i} ({})", s.describe()))
        .unwrap_or_else(|| format!("input {input_shape:?}"))
}

impl<T: Real> Network<T> {
    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        self.layers.last().map(|l| l.out_shape.as_slice()).unwrap_or(&self.input_shape)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec.clone()).collect()
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn param_count(&self) -> usize {
        self.params().map(|t| t.len()).sum()
    }

    pub fn params(&self) -> impl Iterator<Item = &Tensor<T>> {
        self.layers.iter().flat_map(|l| l.params.iter())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Tensor<T>> {
        self.layers.iter_mut().flat_map(|l| l.params.iter_mut())
    }

    /// Non-trainable state tensors (batchnorm running statistics).
    pub fn states(&self) -> impl Iterator<Item = &Tensor<T>> {
        self.layers.iter().flat_map(|l| l.state.iter())
    }

    pub(crate) fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub(crate) fn from_parts(input_shape: Vec<usize>, layers: Vec<Layer<T>>, seed: u64) -> Self {
        Network {
            input_shape,
            layers,
            seed,
        }
    }

    pub fn ends_with_sigmoid(&self) -> bool {
        matches!(self.layers.last().map(|l| &l.spec), Some(LayerSpec::Sigmoid))
    }

    /// Same network with parameters converted to another precision.
    pub fn cast<U: Real>(&self) -> Network<U> {
        Network {
            input_shape: self.input_shape.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    spec: l.spec.clone(),
                    in_shape: l.in_shape.clone(),
                    out_shape: l.out_shape.clone(),
                    params: l.params.iter().map(Tensor::cast).collect(),
                    state: l.state.iter().map(Tensor::cast).collect(),
                })
                .collect(),
            seed: self.seed,
        }
    }

    fn check_input(&self, batch: &Tensor<T>) -> Result<()> {
        if batch.shape().is_empty() || batch.sample_shape() != self.input_shape.as_slice() {
            let mut expected = vec![batch.batch_len()];
            expected.extend_from_slice(&self.input_shape);
            return Err(NnError::Shape {
                expected,
                actual: batch.shape().to_vec(),
            });
        }
        Ok(())
    }

    /// Inference-mode forward pass: a pure function of weights and input.
    pub fn forward(&self, batch: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(batch)?;
        let mut x = batch.clone();
        for (index, layer) in self.layers.iter().enumerate() {
            let (y, _) = layer.forward(&x, false, None);
            if !y.all_finite() {
                return Err(NnError::NonFinite {
                    index,
                    layer: layer.spec.describe(),
                });
            }
            x = y;
        }
        Ok(x)
    }

    /// Inference over a large batch in fixed-size chunks evaluated in
    /// parallel. Chunk boundaries depend only on `chunk`, so the result does
    /// not depend on the number of worker threads.
    pub fn predict(&self, batch: &Tensor<T>, chunk: usize) -> Result<Tensor<T>> {
        self.check_input(batch)?;
        let n = batch.batch_len();
        let chunk = chunk.max(1);
        let starts: Vec<usize> = (0..n).step_by(chunk).collect();
        let parts: Vec<Tensor<T>> = starts
            .par_iter()
            .map(|&s| self.forward(&batch.slice_batch(s, (s + chunk).min(n))))
            .collect::<Result<_>>()?;
        if parts.is_empty() {
            let mut shape = vec![0];
            shape.extend_from_slice(self.output_shape());
            return Ok(Tensor::zeros(&shape));
        }
        Tensor::concat(&parts)
    }

    /// Forward pass retaining every activation for backprop. In train mode
    /// dropout draws from `rng` when one is given and is skipped otherwise.
    pub fn forward_trace(&self, batch: &Tensor<T>, mode: Mode, mut rng: Option<&mut Rng>) -> Result<Trace<T>> {
        self.check_input(batch)?;
        let train = mode == Mode::Train;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut caches = Vec::with_capacity(self.layers.len());
        activations.push(batch.clone());
        for (index, layer) in self.layers.iter().enumerate() {
            let (y, cache) = layer.forward(activations.last().expect("input"), train, rng.as_deref_mut());
            if !y.all_finite() {
                return Err(NnError::NonFinite {
                    index,
                    layer: layer.spec.describe(),
                });
            }
            activations.push(y);
            caches.push(cache);
        }
        Ok(Trace { activations, caches })
    }

    /// Backpropagates `grad`, the loss gradient w.r.t. `trace.activations[upto]`,
    /// through layers `upto - 1 ..= 0`. Layers at or after `upto` get zero
    /// gradients.
    pub fn backward(&self, trace: &Trace<T>, grad: Tensor<T>, upto: usize) -> Grads<T> {
        let mut per_layer: Vec<Vec<Tensor<T>>> = self
            .layers
            .iter()
            .map(|l| l.params.iter().map(|p| Tensor::zeros(p.shape())).collect())
            .collect();
        let mut g = grad;
        for i in (0..upto).rev() {
            let layer = &self.layers[i];
            let (dx, dparams) = layer.backward(&trace.activations[i], &trace.activations[i + 1], &trace.caches[i], &g);
            if !dparams.is_empty() {
                per_layer[i] = dparams;
            }
            g = dx;
        }
        Grads { per_layer }
    }

    /// Replaces every batchnorm running average with the exact statistics of
    /// its input over `inputs` under the current weights, front to back.
    pub fn recalibrate_batchnorm(&mut self, inputs: &Tensor<T>, chunk: usize) -> Result<()> {
        self.check_input(inputs)?;
        if !self.layers.iter().any(|l| matches!(l.spec, LayerSpec::BatchNorm { .. })) {
            return Ok(());
        }
        let n = inputs.batch_len();
        let chunk = chunk.max(1);
        let mut parts: Vec<Tensor<T>> = (0..n)
            .step_by(chunk)
            .map(|s| inputs.slice_batch(s, (s + chunk).min(n)))
            .collect();
        let last_norm = self
            .layers
            .iter()
            .rposition(|l| matches!(l.spec, LayerSpec::BatchNorm { .. }))
            .unwrap_or(0);
        for layer in self.layers.iter_mut().take(last_norm + 1) {
            if let LayerSpec::BatchNorm { channels, .. } = layer.spec {
                let mut sum = vec![0.0f64; channels];
                let mut count = 0usize;
                for p in &parts {
                    for row in p.data().chunks_exact(channels) {
                        for (s, v) in sum.iter_mut().zip(row) {
                            *s += v.as_f64();
                        }
                        count += 1;
                    }
                }
                if count == 0 {
                    return Ok(());
                }
                let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
                let mut sq = vec![0.0f64; channels];
                for p in &parts {
                    for row in p.data().chunks_exact(channels) {
                        for ((q, v), m) in sq.iter_mut().zip(row).zip(&mean) {
                            *q += (v.as_f64() - m).powi(2);
                        }
                    }
                }
                for (c, m) in mean.iter().enumerate() {
                    layer.state[0].data_mut()[c] = T::from_f64_lossy(*m);
                    layer.state[1].data_mut()[c] = T::from_f64_lossy(sq[c] / count as f64);
                }
            }
            let l = &*layer;
            parts = parts.par_iter().map(|p| l.forward(p, false, None).0).collect();
        }
        Ok(())
    }

    /// Folds the batch statistics of a train-mode trace into the batchnorm
    /// running averages.
    pub fn update_running_stats(&mut self, trace: &Trace<T>) {
        for (layer, cache) in self.layers.iter_mut().zip(&trace.caches) {
            if let (LayerSpec::BatchNorm { momentum, .. }, Cache::Norm { mean, var, .. }) = (&layer.spec, cache) {
                let mom = T::from_f64_lossy(*momentum as f64);
                let rest = T::one() - mom;
                let (rm, rv) = layer.state.split_at_mut(1);
                for ((r, &b), (s, &v)) in rm[0]
                    .data_mut()
                    .iter_mut()
                    .zip(mean)
                    .zip(rv[0].data_mut().iter_mut().zip(var))
                {
                    *r = mom * *r + rest * b;
                    *s = mom * *s + rest * v;
                }
            }
        }
    }
}
