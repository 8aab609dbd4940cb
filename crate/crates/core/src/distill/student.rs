use serde::{Deserialize, Serialize};
use wastemap_nn::{train, Augment, Tensor, TrainConfig, TrainReport};

use crate::dataengine::{PATCH_CHANNELS, PATCH_SIZE};
use crate::error::{CoreError, Result};
use crate::models::{expand_dihedral, make_patch_classifier, AugmentMode, DihedralAugment, PatchArch, PatchClassifier};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StudentConfig {
    pub arch: PatchArch,
    pub train: TrainConfig,
    pub augment: AugmentMode,
}

/// Trains one patch classifier on the hard-labeled and soft-labeled patches
/// pooled into a single uniformly weighted set.
pub fn train_student(
    hard_x: &Tensor,
    hard_y: &[f32],
    soft_x: &Tensor,
    soft_y: &[f32],
    cfg: &StudentConfig,
) -> Result<(PatchClassifier, TrainReport)> {
    if hard_y.is_empty() {
        return Err(CoreError::InvalidInput("student needs at least one hard-labeled patch".into()));
    }
    if soft_y.is_empty() {
        return Err(CoreError::InvalidInput("student needs at least one soft-labeled patch".into()));
    }
    let x = Tensor::concat(&[hard_x.clone(), soft_x.clone()])?;
    let y = [hard_y, soft_y].concat();
    let (x, y) = if cfg.augment == AugmentMode::Expand {
        expand_dihedral(&x, &y)?
    } else {
        (x, y)
    };
    let aug = DihedralAugment {
        size: PATCH_SIZE,
        channels: PATCH_CHANNELS,
    };
    let augment: Option<&dyn Augment> = (cfg.augment == AugmentMode::Random).then_some(&aug as &dyn Augment);
    let mut model = make_patch_classifier(&cfg.arch, cfg.train.seed)?;
    let report = train(&mut model.net, &x, &y, &cfg.train, augment)?;
    log::info!(
        "student trained on {} hard + {} soft patches, final accuracy {:.4}",
        hard_y.len(),
        soft_y.len(),
        report.final_accuracy
    );
    Ok((model, report))
}
