use rand::seq::SliceRandom;

use crate::error::{NnError, Result};
use crate::network::{Mode, Network};
use crate::optim::{Adam, TrainConfig};
use crate::real::Real;
use crate::tensor::Tensor;
use crate::{rng_from_seed, Rng};

/// Training-time input transformation applied per sample.
pub trait Augment: Sync {
    /// Writes a randomly transformed copy of `sample` into `out`.
    fn augment(&self, sample: &[f32], out: &mut [f32], rng: &mut Rng);
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean binary cross-entropy per epoch, measured on the training batches.
    pub loss_history: Vec<f32>,
    /// Infer-mode accuracy on the training set after the last epoch.
    pub final_accuracy: f32,
    pub steps: usize,
}

/// Numerically stable binary cross-entropy of a logit against a (soft) target.
pub fn bce_with_logit<T: Real>(logit: T, target: T) -> T {
    let zero = T::zero();
    logit.max(zero) - logit * target + (T::one() + (-logit.abs()).exp()).ln()
}

fn bce_prob<T: Real>(p: T, target: T) -> T {
    let eps = T::from_f64_lossy(1e-7);
    let p = p.max(eps).min(T::one() - eps);
    -(target * p.ln() + (T::one() - target) * (T::one() - p).ln())
}

fn check_targets(net: &Network<f32>, inputs: &Tensor<f32>, targets: &[f32]) -> Result<()> {
    if net.output_shape() != [1] {
        return Err(NnError::Config(format!(
            "binary training needs a single output, network produces {:?}",
            net.output_shape()
        )));
    }
    if inputs.batch_len() != targets.len() {
        return Err(NnError::Shape {
            expected: vec![inputs.batch_len()],
            actual: vec![targets.len()],
        });
    }
    if let Some(t) = targets.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(NnError::Config(format!("target {t} outside [0, 1]")));
    }
    Ok(())
}

/// Trains `net` in place with Adam on binary cross-entropy.
///
/// Deterministic for a fixed `cfg.seed`: shuffling, dropout and augmentation
/// all draw from one generator seeded from it.
pub fn train(
    net: &mut Network<f32>,
    inputs: &Tensor<f32>,
    targets: &[f32],
    cfg: &TrainConfig,
    augment: Option<&dyn Augment>,
) -> Result<TrainReport> {
    cfg.validate()?;
    check_targets(net, inputs, targets)?;
    let n = inputs.batch_len();
    let mut rng = rng_from_seed(cfg.seed);
    let mut adam = Adam::from_config(net, cfg);
    let mut order: Vec<usize> = (0..n).collect();
    let mut loss_history = Vec::with_capacity(cfg.epochs);
    let fused = net.ends_with_sigmoid();
    let depth = net.num_layers();
    let sample_len = inputs.sample_len();
    let mut steps = 0;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let lr = cfg.rate_at(epoch);
        let mut epoch_loss = 0.0f64;
        for (batch_index, idx) in order.chunks(cfg.batch_size).enumerate() {
            let mut x = inputs.select(idx);
            if let Some(aug) = augment {
                let mut out = vec![0.0f32; sample_len];
                for s in x.data_mut().chunks_exact_mut(sample_len) {
                    aug.augment(s, &mut out, &mut rng);
                    s.copy_from_slice(&out);
                }
            }
            let y: Vec<f32> = idx.iter().map(|&i| targets[i]).collect();
            let trace = net.forward_trace(&x, Mode::Train, Some(&mut rng)).map_err(|e| match e {
                NnError::NonFinite { .. } => NnError::NanLoss {
                    epoch,
                    batch: batch_index,
                },
                other => other,
            })?;
            let b = idx.len() as f32;
            let (loss, grad, upto) = if fused {
                let logits = &trace.activations[depth - 1];
                let probs = trace.output();
                let loss: f32 = logits.data().iter().zip(&y).map(|(&z, &t)| bce_with_logit(z, t)).sum();
                let g = probs.data().iter().zip(&y).map(|(&p, &t)| (p - t) / b).collect();
                (loss, Tensor::from_vec(logits.shape(), g)?, depth - 1)
            } else {
                let probs = trace.output();
                let loss: f32 = probs.data().iter().zip(&y).map(|(&p, &t)| bce_prob(p, t)).sum();
                let g = probs
                    .data()
                    .iter()
                    .zip(&y)
                    .map(|(&p, &t)| {
                        let p = p.clamp(1e-7, 1.0 - 1e-7);
                        (p - t) / (p * (1.0 - p)) / b
                    })
                    .collect();
                (loss, Tensor::from_vec(probs.shape(), g)?, depth)
            };
            if !loss.is_finite() {
                return Err(NnError::NanLoss {
                    epoch,
                    batch: batch_index,
                });
            }
            epoch_loss += loss as f64;
            let grads = net.backward(&trace, grad, upto);
            net.update_running_stats(&trace);
            adam.step(net, &grads, lr);
            steps += 1;
        }
        loss_history.push((epoch_loss / n.max(1) as f64) as f32);
    }
    if cfg.recalibrate_batchnorm {
        net.recalibrate_batchnorm(inputs, 256)?;
    }
    let final_accuracy = accuracy(net, inputs, targets)?;
    Ok(TrainReport {
        loss_history,
        final_accuracy,
        steps,
    })
}

/// Fraction of samples whose infer-mode score lands on the same side of 0.5
/// as the target.
pub fn accuracy(net: &Network<f32>, inputs: &Tensor<f32>, targets: &[f32]) -> Result<f32> {
    if targets.is_empty() {
        return Ok(0.0);
    }
    let out = net.predict(inputs, 256)?;
    let hits = out
        .data()
        .iter()
        .zip(targets)
        .filter(|(&p, &t)| (p >= 0.5) == (t >= 0.5))
        .count();
    Ok(hits as f32 / targets.len() as f32)
}

/// Mean infer-mode binary cross-entropy.
pub fn evaluate_loss(net: &Network<f32>, inputs: &Tensor<f32>, targets: &[f32]) -> Result<f32> {
    let out = net.predict(inputs, 256)?;
    let total: f32 = out.data().iter().zip(targets).map(|(&p, &t)| bce_prob(p, t)).sum();
    Ok(total / targets.len().max(1) as f32)
}
