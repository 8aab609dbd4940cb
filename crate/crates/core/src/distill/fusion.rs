use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::models::ENSEMBLE_SIZE;

/// Clamp applied to rates and priors so no single piece of evidence is
/// absorbing.
pub const EPSILON: f64 = 1e-3;

/// Mean heatmap score a patch must exceed to count as a positive pixel vote.
pub const PIXEL_AGGREGATE_THRESHOLD: f64 = 0.02;

pub type VoteVector = [f32; ENSEMBLE_SIZE];

pub fn clamp_probability(p: f64) -> f64 {
    p.clamp(EPSILON, 1.0 - EPSILON)
}

/// Binarizes the votes at 0.5 and returns `mode · (1 − 2σ)` with σ the
/// population standard deviation of the binary votes. A tie counts as mode 0.
pub fn fuse_ensemble(votes: &VoteVector) -> f64 {
    let pos = votes.iter().filter(|&&v| v >= 0.5).count() as f64;
    let frac = pos / ENSEMBLE_SIZE as f64;
    if pos * 2.0 <= ENSEMBLE_SIZE as f64 {
        return 0.0;
    }
    let sigma = (frac * (1.0 - frac)).sqrt();
    1.0 - 2.0 * sigma
}

/// True iff the mean of `scores` is strictly above 0.02.
pub fn pixel_aggregate_label(scores: &[f32]) -> Result<bool> {
    if scores.is_empty() {
        return Err(CoreError::InvalidInput("pixel aggregate of an empty patch".into()));
    }
    let mean = scores.iter().map(|&s| s as f64).sum::<f64>() / scores.len() as f64;
    Ok(mean > PIXEL_AGGREGATE_THRESHOLD)
}

/// True- and false-positive rates of a binary voter, held in `[ε, 1 − ε]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelStats {
    tpr: f64,
    fpr: f64,
}

impl ModelStats {
    pub fn new(tpr: f64, fpr: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&tpr) || !(0.0..=1.0).contains(&fpr) {
            return Err(CoreError::InvalidInput(format!("rates must lie in [0, 1], got tpr {tpr}, fpr {fpr}")));
        }
        Ok(ModelStats {
            tpr: clamp_probability(tpr),
            fpr: clamp_probability(fpr),
        })
    }

    /// Rates of `predictions` against `truth`; needs both classes in `truth`.
    pub fn measure(predictions: &[bool], truth: &[bool]) -> Result<Self> {
        if predictions.len() != truth.len() {
            return Err(CoreError::InvalidInput(format!(
                "{} predictions for {} labels",
                predictions.len(),
                truth.len()
            )));
        }
        let pos = truth.iter().filter(|&&t| t).count();
        let neg = truth.len() - pos;
        if pos == 0 || neg == 0 {
            return Err(CoreError::SingleClass(format!("held-out split has {pos} positives and {neg} negatives")));
        }
        let tp = predictions.iter().zip(truth).filter(|(&p, &t)| p && t).count();
        let fp = predictions.iter().zip(truth).filter(|(&p, &t)| p && !t).count();
        ModelStats::new(tp as f64 / pos as f64, fp as f64 / neg as f64)
    }

    pub fn tpr(&self) -> f64 {
        self.tpr
    }

    pub fn fpr(&self) -> f64 {
        self.fpr
    }

    fn likelihood_ratio(&self, vote: bool) -> f64 {
        if vote {
            self.tpr / self.fpr
        } else {
            (1.0 - self.tpr) / (1.0 - self.fpr)
        }
    }
}

/// Posterior probability after multiplying the prior odds by each vote's
/// likelihood ratio. The prior is clamped into `[ε, 1 − ε]` first.
pub fn bayes_fuse(prior: f64, votes: &[(bool, ModelStats)]) -> f64 {
    let p = clamp_probability(prior);
    // Summing log ratios in sorted order keeps the result bitwise
    // independent of vote order.
    let mut logs: Vec<f64> = votes.iter().map(|(v, s)| s.likelihood_ratio(*v).ln()).collect();
    logs.sort_by(f64::total_cmp);
    let log_odds = (p / (1.0 - p)).ln() + logs.iter().sum::<f64>();
    1.0 / (1.0 + (-log_odds).exp())
}
