use serde::{Deserialize, Serialize};

use crate::models::ENSEMBLE_SIZE;

/// Confusion counts and derived scores for binary predictions.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BinaryMetrics {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl BinaryMetrics {
    pub fn from_predictions(predictions: &[bool], truth: &[bool]) -> Self {
        let mut m = BinaryMetrics::default();
        for (&p, &t) in predictions.iter().zip(truth) {
            match (p, t) {
                (true, true) => m.tp += 1,
                (true, false) => m.fp += 1,
                (false, false) => m.tn += 1,
                (false, true) => m.fn_ += 1,
            }
        }
        m
    }

    /// Thresholds `scores` at 0.5.
    pub fn from_scores(scores: &[f32], truth: &[bool]) -> Self {
        let preds: Vec<bool> = scores.iter().map(|&s| s >= 0.5).collect();
        Self::from_predictions(&preds, truth)
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.tp + self.tn + self.fp + self.fn_)
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Ensemble decision: more than half of the members vote positive.
pub fn majority_vote(votes: &[f32; ENSEMBLE_SIZE]) -> bool {
    votes.iter().filter(|&&v| v >= 0.5).count() * 2 > ENSEMBLE_SIZE
}
