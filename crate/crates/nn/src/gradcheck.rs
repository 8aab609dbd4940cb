use rand::seq::index::sample;

use crate::error::{NnError, Result};
use crate::layer::{Cache, LayerSpec};
use crate::network::{Grads, Mode, Network, Trace};
use crate::tensor::Tensor;
use crate::train::bce_with_logit;
use crate::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    /// Mean binary cross-entropy; fused with a trailing sigmoid when present.
    BinaryCrossEntropy,
    /// `½ Σ (ŷ − y)²` averaged over the batch.
    Squared,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckOptions {
    pub loss: Loss,
    /// Central-difference step applied to the 64-bit shadow weights.
    pub step: f64,
    /// Weights sampled per parameter tensor; tensors this small are checked exhaustively.
    pub samples_per_tensor: usize,
    pub seed: u64,
    /// Gradients smaller than this are compared by absolute difference, so
    /// exactly-zero gradients (a bias feeding batch norm) measure rounding
    /// noise against this scale rather than against itself.
    pub floor: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            loss: Loss::BinaryCrossEntropy,
            step: 1e-5,
            samples_per_tensor: 12,
            seed: 0,
            floor: 1e-5,
        }
    }
}

/// Loss value and backprop gradients of a train-mode (dropout-free) pass.
pub fn analytic_gradients(net: &Network<f64>, input: &Tensor<f64>, target: &Tensor<f64>, loss: Loss) -> Result<(f64, Grads<f64>)> {
    let trace = net.forward_trace(input, Mode::Train, None)?;
    let out = trace.output();
    if out.shape() != target.shape() {
        return Err(NnError::Shape {
            expected: out.shape().to_vec(),
            actual: target.shape().to_vec(),
        });
    }
    let b = input.batch_len().max(1) as f64;
    let depth = net.num_layers();
    match loss {
        Loss::BinaryCrossEntropy if net.ends_with_sigmoid() => {
            let logits = &trace.activations[depth - 1];
            let value = logits
                .data()
                .iter()
                .zip(target.data())
                .map(|(&z, &t)| bce_with_logit(z, t))
                .sum::<f64>()
                / b;
            let g = out.data().iter().zip(target.data()).map(|(&p, &t)| (p - t) / b).collect();
            let grads = net.backward(&trace, Tensor::from_vec(logits.shape(), g)?, depth - 1);
            Ok((value, grads))
        }
        Loss::BinaryCrossEntropy => {
            let value = out
                .data()
                .iter()
                .zip(target.data())
                .map(|(&p, &t)| -(t * p.ln() + (1.0 - t) * (1.0 - p).ln()))
                .sum::<f64>()
                / b;
            let g = out
                .data()
                .iter()
                .zip(target.data())
                .map(|(&p, &t)| (p - t) / (p * (1.0 - p)) / b)
                .collect();
            let grads = net.backward(&trace, Tensor::from_vec(out.shape(), g)?, depth);
            Ok((value, grads))
        }
        Loss::Squared => {
            let value = out
                .data()
                .iter()
                .zip(target.data())
                .map(|(&p, &t)| 0.5 * (p - t) * (p - t))
                .sum::<f64>()
                / b;
            let g = out.data().iter().zip(target.data()).map(|(&p, &t)| (p - t) / b).collect();
            let grads = net.backward(&trace, Tensor::from_vec(out.shape(), g)?, depth);
            Ok((value, grads))
        }
    }
}

fn loss_of(net: &Network<f64>, trace: &Trace<f64>, target: &Tensor<f64>, loss: Loss, batch: usize) -> f64 {
    let b = batch.max(1) as f64;
    let depth = net.num_layers();
    let t = target.data();
    match loss {
        Loss::BinaryCrossEntropy if net.ends_with_sigmoid() => {
            trace.activations[depth - 1]
                .data()
                .iter()
                .zip(t)
                .map(|(&z, &y)| bce_with_logit(z, y))
                .sum::<f64>()
                / b
        }
        Loss::BinaryCrossEntropy => {
            trace
                .output()
                .data()
                .iter()
                .zip(t)
                .map(|(&p, &y)| -(y * p.ln() + (1.0 - y) * (1.0 - p).ln()))
                .sum::<f64>()
                / b
        }
        Loss::Squared => trace.output().data().iter().zip(t).map(|(&p, &y)| 0.5 * (p - y) * (p - y)).sum::<f64>() / b,
    }
}


/// Which piece of the piecewise-smooth loss a forward pass landed on: the
/// sign of every ReLU input and the winner of every pooling window.
#[derive(PartialEq)]
struct Region {
    relu: Vec<bool>,
    argmax: Vec<u32>,
}

fn region_of(net: &Network<f64>, trace: &Trace<f64>) -> Region {
    let mut relu = Vec::new();
    let mut argmax = Vec::new();
    for (i, layer) in net.layers().iter().enumerate() {
        match (&layer.spec, &trace.caches[i]) {
            (LayerSpec::Relu, _) => relu.extend(trace.activations[i].data().iter().map(|&v| v > 0.0)),
            (_, Cache::Argmax(idx)) => argmax.extend_from_slice(idx),
            _ => {}
        }
    }
    Region { relu, argmax }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    /// Maximum of `|analytic − numeric| / max(|analytic|, |numeric|, floor)`.
    pub max_rel_error: f64,
    pub checked: usize,
    /// Sampled weights whose ±step interval crossed a ReLU or pooling kink,
    /// where the central difference is not a derivative. Each is replaced by
    /// another draw from the same tensor while draws remain.
    pub kinks_skipped: usize,
}

/// Compares backprop against central finite differences on a 64-bit shadow
/// copy of `net`, in train mode with dropout disabled.
pub fn gradient_check_report(net: &Network<f32>, input: &Tensor<f32>, target: &Tensor<f32>, opts: &GradCheckOptions) -> Result<GradCheckReport> {
    let mut shadow: Network<f64> = net.cast();
    let x = input.cast::<f64>();
    let y = target.cast::<f64>();
    let (_, grads) = analytic_gradients(&shadow, &x, &y, opts.loss)?;
    let analytic: Vec<Tensor<f64>> = grads.flat().cloned().collect();
    let base = region_of(&shadow, &shadow.forward_trace(&x, Mode::Train, None)?);
    let mut rng = rng_from_seed(opts.seed);

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        kinks_skipped: 0,
    };
    for (ti, grad) in analytic.iter().enumerate() {
        let len = grad.len();
        let mut queue: Vec<usize> = if len <= opts.samples_per_tensor {
            (0..len).collect()
        } else {
            sample(&mut rng, len, len.min(4 * opts.samples_per_tensor)).into_vec()
        };
        queue.reverse();
        let want = opts.samples_per_tensor.min(len);
        let mut done = 0;
        while done < want {
            let Some(i) = queue.pop() else { break };
            let original = shadow.params().nth(ti).expect("tensor index").data()[i];
            let mut eval_at = |w: f64| -> Result<(f64, Region)> {
                shadow.params_mut().nth(ti).expect("tensor index").data_mut()[i] = w;
                let trace = shadow.forward_trace(&x, Mode::Train, None)?;
                Ok((loss_of(&shadow, &trace, &y, opts.loss, x.batch_len()), region_of(&shadow, &trace)))
            };
            let (plus, r_plus) = eval_at(original + opts.step)?;
            let (minus, r_minus) = eval_at(original - opts.step)?;
            shadow.params_mut().nth(ti).expect("tensor index").data_mut()[i] = original;
            if r_plus != base || r_minus != base {
                report.kinks_skipped += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * opts.step);
            let a = grad.data()[i];
            let denom = a.abs().max(numeric.abs()).max(opts.floor);
            report.max_rel_error = report.max_rel_error.max((a - numeric).abs() / denom);
            report.checked += 1;
            done += 1;
        }
    }
    Ok(report)
}

/// [`gradient_check_report`] reduced to the maximum relative error.
pub fn gradient_check(net: &Network<f32>, input: &Tensor<f32>, target: &Tensor<f32>, opts: &GradCheckOptions) -> Result<f64> {
    gradient_check_report(net, input, target, opts).map(|r| r.max_rel_error)
}
