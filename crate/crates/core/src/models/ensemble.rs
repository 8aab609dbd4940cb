use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use wastemap_nn::{train, Augment, Tensor, TrainConfig};

use crate::dataengine::{PATCH_CHANNELS, PATCH_SIZE};
use crate::error::{CoreError, Result};

use super::patch::{expand_dihedral, make_patch_classifier, AugmentMode, DihedralAugment, PatchArch, PatchClassifier};

pub const ENSEMBLE_SIZE: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub arch: PatchArch,
    pub train: TrainConfig,
    pub augment: AugmentMode,
    /// Member `i` is initialized with `base_seed + i`.
    pub base_seed: u64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            arch: PatchArch::default(),
            train: TrainConfig::default(),
            augment: AugmentMode::default(),
            base_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberReport {
    pub seed: u64,
    pub loss_history: Vec<f32>,
    pub train_accuracy: f32,
}

#[derive(Debug, Clone)]
pub struct TeacherEnsemble {
    pub members: Vec<PatchClassifier>,
    pub seeds: Vec<u64>,
    pub reports: Vec<MemberReport>,
}

impl TeacherEnsemble {
    pub fn from_members(members: Vec<PatchClassifier>, seeds: Vec<u64>) -> Result<Self> {
        if members.len() != ENSEMBLE_SIZE || seeds.len() != ENSEMBLE_SIZE {
            return Err(CoreError::InvalidInput(format!(
                "ensemble needs exactly {ENSEMBLE_SIZE} members, got {}",
                members.len()
            )));
        }
        Ok(TeacherEnsemble {
            members,
            seeds,
            reports: Vec::new(),
        })
    }

    /// One vote vector of 32 member scores per patch in `batch`.
    pub fn votes(&self, batch: &Tensor) -> Result<Vec<[f32; ENSEMBLE_SIZE]>> {
        let per_member: Vec<Vec<f32>> = self.members.iter().map(|m| m.score(batch)).collect::<Result<_>>()?;
        Ok((0..batch.batch_len())
            .map(|i| std::array::from_fn(|k| per_member[k][i]))
            .collect())
    }
}

/// Trains 32 patch classifiers on the same data and hyperparameters, varying
/// only the initialization seed. Members train in parallel; each member's
/// result depends only on its seed.
pub fn train_teacher_ensemble(inputs: &Tensor, targets: &[f32], cfg: &EnsembleConfig) -> Result<TeacherEnsemble> {
    if targets.is_empty() {
        return Err(CoreError::InvalidInput("labeled patch set is empty".into()));
    }
    let pos = targets.iter().filter(|t| **t >= 0.5).count();
    if pos == 0 || pos == targets.len() {
        return Err(CoreError::SingleClass(format!("{pos} positives among {} patches", targets.len())));
    }
    let expanded;
    let (x, y) = if cfg.augment == AugmentMode::Expand {
        expanded = expand_dihedral(inputs, targets)?;
        (&expanded.0, expanded.1.as_slice())
    } else {
        (inputs, targets)
    };
    let aug = DihedralAugment {
        size: PATCH_SIZE,
        channels: PATCH_CHANNELS,
    };
    let seeds: Vec<u64> = (0..ENSEMBLE_SIZE as u64).map(|i| cfg.base_seed + i).collect();
    let trained: Vec<(PatchClassifier, MemberReport)> = seeds
        .par_iter()
        .map(|&seed| {
            let mut model = make_patch_classifier(&cfg.arch, seed)?;
            let tc = TrainConfig { seed, ..cfg.train.clone() };
            let augment: Option<&dyn Augment> = (cfg.augment == AugmentMode::Random).then_some(&aug as &dyn Augment);
            let report = train(&mut model.net, x, y, &tc, augment)?;
            log::info!("teacher seed {seed}: train accuracy {:.4}", report.final_accuracy);
            Ok((
                model,
                MemberReport {
                    seed,
                    loss_history: report.loss_history,
                    train_accuracy: report.final_accuracy,
                },
            ))
        })
        .collect::<Result<_>>()?;
    let (members, reports): (Vec<_>, Vec<_>) = trained.into_iter().unzip();
    Ok(TeacherEnsemble { members, seeds, reports })
}
