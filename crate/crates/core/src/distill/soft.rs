use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use wastemap_nn::{rng_from_seed, Tensor};

use crate::dataengine::{build_spectrogram_field, LabeledPatch, NormStats, PatchTensor};
use crate::detect::infer_heatmap;
use crate::error::{CoreError, Result};
use crate::models::{flatten_patches, patch_batch, PixelClassifier, RbfSvm, TeacherEnsemble};

use super::fusion::{bayes_fuse, fuse_ensemble, pixel_aggregate_label, ModelStats};

/// Fraction of the labeled patches withheld to measure voter statistics.
pub const HELDOUT_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftTarget {
    pub patch_id: String,
    pub soft_p: f64,
    pub ensemble_value: f64,
    pub svm_vote: bool,
    pub pixel_vote: bool,
}

pub struct DistillModels<'a> {
    pub ensemble: &'a TeacherEnsemble,
    pub svm: &'a RbfSvm,
    pub pixel: &'a PixelClassifier,
    pub stats: &'a NormStats,
    pub svm_stats: ModelStats,
    pub pixel_stats: ModelStats,
}

/// Shuffles `0..n` with `seed` and returns `(train, heldout)` index sets with
/// `round(n · fraction)` held out.
pub fn heldout_split(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_from_seed(seed));
    let k = ((n as f64) * fraction).round() as usize;
    let heldout = idx.split_off(n - k.min(n));
    (idx, heldout)
}

fn pixel_votes(patches: &[LabeledPatch], pixel: &PixelClassifier, stats: &NormStats) -> Result<Vec<bool>> {
    patches
        .par_iter()
        .map(|p| {
            let field = build_spectrogram_field(&p.pair.now, &p.pair.prev)?;
            let heat = infer_heatmap(pixel, &field, stats)?;
            let valid: Vec<f32> = heat.scores.iter().zip(&heat.validity).filter(|(_, &v)| v).map(|(&s, _)| s).collect();
            if valid.is_empty() {
                return Ok(false);
            }
            pixel_aggregate_label(&valid)
        })
        .collect()
}

fn tensors(patches: &[LabeledPatch], stats: &NormStats) -> Result<Tensor> {
    let ts: Vec<PatchTensor> = patches.par_iter().map(|p| p.tensor(stats)).collect::<Result<_>>()?;
    Ok(patch_batch(&ts))
}

fn svm_votes(batch: &Tensor, svm: &RbfSvm) -> Result<Vec<bool>> {
    let (x, _) = flatten_patches(batch);
    Ok(svm.decision(&x)?.into_iter().map(|d| d > 0.0).collect())
}

/// TPR/FPR of the SVM and pixel-aggregate votes on hard-labeled patches.
pub fn measure_model_stats(heldout: &[LabeledPatch], svm: &RbfSvm, pixel: &PixelClassifier, stats: &NormStats) -> Result<(ModelStats, ModelStats)> {
    let truth: Vec<bool> = heldout
        .iter()
        .map(|p| {
            p.label
                .target()
                .map(|t| t >= 0.5)
                .ok_or_else(|| CoreError::InvalidInput(format!("held-out patch {} has no hard label", p.id)))
        })
        .collect::<Result<_>>()?;
    let batch = tensors(heldout, stats)?;
    let svm_stats = ModelStats::measure(&svm_votes(&batch, svm)?, &truth)?;
    let pixel_stats = ModelStats::measure(&pixel_votes(heldout, pixel, stats)?, &truth)?;
    Ok((svm_stats, pixel_stats))
}

/// Fused soft probability for every patch: the ensemble value (clamped) is the
/// prior, updated with the SVM and pixel-aggregate votes.
pub fn build_soft_targets(patches: &[LabeledPatch], models: &DistillModels<'_>) -> Result<Vec<SoftTarget>> {
    if patches.is_empty() {
        return Ok(Vec::new());
    }
    let batch = tensors(patches, models.stats)?;
    let votes = models.ensemble.votes(&batch)?;
    let svm = svm_votes(&batch, models.svm)?;
    let pixel = pixel_votes(patches, models.pixel, models.stats)?;
    Ok(patches
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let ensemble_value = fuse_ensemble(&votes[i]);
            SoftTarget {
                patch_id: p.id.clone(),
                soft_p: bayes_fuse(ensemble_value, &[(svm[i], models.svm_stats), (pixel[i], models.pixel_stats)]),
                ensemble_value,
                svm_vote: svm[i],
                pixel_vote: pixel[i],
            }
        })
        .collect())
}

pub fn write_soft_targets(path: &Path, targets: &[SoftTarget]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for t in targets {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_soft_targets(path: &Path) -> Result<Vec<SoftTarget>> {
    let r = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let t: SoftTarget = serde_json::from_str(&line)
            .map_err(|e| CoreError::Format(format!("{}:{}: {e}", path.display(), n + 1)))?;
        if !(0.0..=1.0).contains(&t.soft_p) {
            return Err(CoreError::Format(format!("{}:{}: soft_p {} outside [0, 1]", path.display(), n + 1, t.soft_p)));
        }
        out.push(t);
    }
    Ok(out)
}
