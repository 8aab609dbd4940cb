use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::network::{Grads, Network};
use crate::real::Real;

/// Multiplicative step decay: the rate is multiplied by `factor` every
/// `period` epochs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub factor: f32,
    pub period: usize,
}

impl LrSchedule {
    pub fn rate_at(&self, base: f32, epoch: usize) -> f32 {
        if self.period == 0 {
            return base;
        }
        base * self.factor.powi((epoch / self.period) as i32)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f32,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr_schedule: Option<LrSchedule>,
    /// Seeds batch shuffling, dropout masks and augmentation draws.
    pub seed: u64,
    pub beta1: f32,
    pub beta2: f32,
    pub epsilon: f32,
    /// Reset batchnorm running averages to exact training-set statistics
    /// once training ends.
    pub recalibrate_batchnorm: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            batch_size: 128,
            epochs: 10,
            lr_schedule: None,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            recalibrate_batchnorm: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(NnError::Config(format!("learning_rate must be >= 0, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(NnError::Config("batch_size must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(NnError::Config("Adam decays must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn rate_at(&self, epoch: usize) -> f32 {
        match &self.lr_schedule {
            Some(s) => s.rate_at(self.learning_rate, epoch),
            None => self.learning_rate,
        }
    }
}

/// Adam optimizer state for one network.
#[derive(Debug, Clone)]
pub struct Adam<T: Real> {
    beta1: T,
    beta2: T,
    epsilon: T,
    step: i32,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(net: &Network<T>, beta1: f32, beta2: f32, epsilon: f32) -> Self {
        let zeros: Vec<Vec<T>> = net.params().map(|p| vec![T::zero(); p.len()]).collect();
        Adam {
            beta1: T::from_f64_lossy(beta1 as f64),
            beta2: T::from_f64_lossy(beta2 as f64),
            epsilon: T::from_f64_lossy(epsilon as f64),
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn from_config(net: &Network<T>, cfg: &TrainConfig) -> Self {
        Self::new(net, cfg.beta1, cfg.beta2, cfg.epsilon)
    }

    /// One bias-corrected Adam update with learning rate `lr`.
    pub fn step(&mut self, net: &mut Network<T>, grads: &Grads<T>, lr: f32) {
        self.step += 1;
        let lr = T::from_f64_lossy(lr as f64);
        let one = T::one();
        let c1 = one - self.beta1.powi(self.step);
        let c2 = one - self.beta2.powi(self.step);
        for (((p, g), m), v) in net
            .params_mut()
            .zip(grads.flat())
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = self.beta1 * *mi + (one - self.beta1) * gi;
                *vi = self.beta2 * *vi + (one - self.beta2) * gi * gi;
                let mhat = *mi / c1;
                let vhat = *vi / c2;
                *w -= lr * mhat / (vhat.sqrt() + self.epsilon);
            }
        }
    }
}
