use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CoreError, Result};
use crate::geo::Polygon;

use super::composite::CompositePair;
use super::patch::{LabeledPatch, PatchLabel, PATCH_SIZE};
use super::spectrogram::{build_spectrogram_field, ndvi, NormStats, Spectrogram, NDVI_THRESHOLD};
use super::synth::{GroundTruth, TruthFeature};

/// How labeled crops are cut from a scene with known ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSampling {
    /// Crops per waste site, each shifted by up to `jitter` pixels.
    pub positives_per_site: usize,
    pub jitter: i64,
    /// Random crops that touch no waste site.
    pub negatives: usize,
    /// Negative crops per greenhouse confounder.
    pub per_confounder: usize,
    pub seed: u64,
}

impl Default for PatchSampling {
    fn default() -> Self {
        PatchSampling {
            positives_per_site: 8,
            jitter: 8,
            negatives: 64,
            per_confounder: 4,
            seed: 0,
        }
    }
}

fn clamp_origin(c: f64, extent: usize) -> usize {
    let max = extent.saturating_sub(PATCH_SIZE) as f64;
    (c - (PATCH_SIZE / 2) as f64).round().clamp(0.0, max) as usize
}

fn touches(f: &TruthFeature, x0: usize, y0: usize, pad: f64) -> bool {
    let [a, b, c, d] = f.polygon.bbox();
    let (x0, y0) = (x0 as f64, y0 as f64);
    let s = PATCH_SIZE as f64;
    !(c + pad <= x0 || a - pad >= x0 + s || d + pad <= y0 || b - pad >= y0 + s)
}

/// Cuts positive crops around waste sites present in both composites,
/// negative crops away from any site, and negative crops over greenhouses.
/// Sites present in only one window are ambiguous and neither sampled nor
/// allowed inside negatives.
pub fn sample_labeled_patches(pair: &CompositePair, truth: &GroundTruth, sampling: &PatchSampling) -> Result<Vec<LabeledPatch>> {
    let (w, h) = pair.dims();
    if w < PATCH_SIZE || h < PATCH_SIZE {
        return Err(CoreError::InvalidInput(format!("scene {w}x{h} smaller than one patch")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(sampling.seed);
    let windows = [pair.now.window, pair.prev.window];
    let persistent: Vec<&TruthFeature> = truth
        .waste()
        .filter(|f| windows.iter().all(|win| f.active_throughout(*win)))
        .collect();
    let any_waste: Vec<&TruthFeature> = truth
        .waste()
        .filter(|f| windows.iter().any(|win| (0..win.span as i32).any(|k| f.active_at(win.start.plus(k)))))
        .collect();

    let mut out = Vec::new();
    let mut push = |origin: [usize; 2], label: PatchLabel, id: String| -> Result<()> {
        let polygons: Vec<Polygon> = if label == PatchLabel::Positive {
            persistent
                .iter()
                .filter(|f| touches(f, origin[0], origin[1], 0.0))
                .map(|f| f.polygon.translate(-(origin[0] as f64), -(origin[1] as f64)))
                .collect()
        } else {
            Vec::new()
        };
        out.push(LabeledPatch {
            id,
            pair: pair.crop(origin[0], origin[1], PATCH_SIZE, PATCH_SIZE)?,
            label,
            polygons,
            origin,
            truth: None,
        });
        Ok(())
    };

    for f in &persistent {
        let c = f.polygon.centroid();
        for k in 0..sampling.positives_per_site {
            let j = sampling.jitter;
            let (dx, dy) = if j > 0 { (rng.gen_range(-j..=j), rng.gen_range(-j..=j)) } else { (0, 0) };
            let origin = [clamp_origin(c[0] + dx as f64, w), clamp_origin(c[1] + dy as f64, h)];
            push(origin, PatchLabel::Positive, format!("{}-pos-{k}", f.id))?;
        }
    }
    for f in truth.greenhouses() {
        let c = f.polygon.centroid();
        for k in 0..sampling.per_confounder {
            let j = sampling.jitter.min(4);
            let (dx, dy) = if j > 0 { (rng.gen_range(-j..=j), rng.gen_range(-j..=j)) } else { (0, 0) };
            let origin = [clamp_origin(c[0] + dx as f64, w), clamp_origin(c[1] + dy as f64, h)];
            if any_waste.iter().any(|s| touches(s, origin[0], origin[1], 2.0)) {
                continue;
            }
            push(origin, PatchLabel::Negative, format!("{}-neg-{k}", f.id))?;
        }
    }
    let mut made = 0;
    let mut attempts = 0;
    while made < sampling.negatives && attempts < sampling.negatives * 200 {
        attempts += 1;
        let origin = [rng.gen_range(0..=w - PATCH_SIZE), rng.gen_range(0..=h - PATCH_SIZE)];
        if any_waste.iter().any(|s| touches(s, origin[0], origin[1], 2.0)) {
            continue;
        }
        push(origin, PatchLabel::Negative, format!("bg-neg-{made}"))?;
        made += 1;
    }
    if made < sampling.negatives {
        log::warn!("only {made} of {} background negatives fit between sites", sampling.negatives);
    }
    Ok(out)
}

/// Waste pixels a crop must contain for its hidden truth to be positive.
pub const UNLABELED_TRUTH_MIN_PIXELS: usize = 10;

/// Crops without labels for distillation. About `near_fraction` of them sit
/// within 12 pixels of a planted feature (waste or greenhouse), the rest
/// anywhere. Each records whether it holds at least 10 pixels of persistent
/// waste as hidden truth for evaluation.
pub fn sample_unlabeled_patches(
    pair: &CompositePair,
    truth: &GroundTruth,
    count: usize,
    near_fraction: f64,
    seed: u64,
) -> Result<Vec<LabeledPatch>> {
    let (w, h) = pair.dims();
    if w < PATCH_SIZE || h < PATCH_SIZE {
        return Err(CoreError::InvalidInput(format!("scene {w}x{h} smaller than one patch")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let windows = [pair.now.window, pair.prev.window];
    let mut waste = vec![false; w * h];
    for f in truth.waste().filter(|f| windows.iter().all(|win| f.active_throughout(*win))) {
        for (x, y) in f.polygon.rasterize(w, h) {
            waste[y * w + x] = true;
        }
    }
    let anchors: Vec<[f64; 2]> = truth.features.iter().map(|f| f.polygon.centroid()).collect();
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let origin = if !anchors.is_empty() && rng.gen_bool(near_fraction.clamp(0.0, 1.0)) {
            let c = anchors[rng.gen_range(0..anchors.len())];
            [
                clamp_origin(c[0] + rng.gen_range(-12..=12) as f64, w),
                clamp_origin(c[1] + rng.gen_range(-12..=12) as f64, h),
            ]
        } else {
            [rng.gen_range(0..=w - PATCH_SIZE), rng.gen_range(0..=h - PATCH_SIZE)]
        };
        let inside = (origin[1]..origin[1] + PATCH_SIZE)
            .map(|y| waste[y * w + origin[0]..y * w + origin[0] + PATCH_SIZE].iter().filter(|&&v| v).count())
            .sum::<usize>();
        out.push(LabeledPatch {
            id: format!("unl-{seed}-{k}"),
            pair: pair.crop(origin[0], origin[1], PATCH_SIZE, PATCH_SIZE)?,
            label: PatchLabel::Unlabeled,
            polygons: Vec::new(),
            origin,
            truth: Some(inside >= UNLABELED_TRUTH_MIN_PIXELS),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PixelDatasetOptions {
    /// Cap on spectrograms taken from each negative patch (random subset).
    pub negatives_per_patch: Option<usize>,
    pub seed: u64,
}

impl Default for PixelDatasetOptions {
    fn default() -> Self {
        PixelDatasetOptions {
            negatives_per_patch: None,
            seed: 0,
        }
    }
}

/// Normalized pixel spectrograms of both classes and the statistics used.
#[derive(Debug, Clone)]
pub struct PixelDataset {
    pub positives: Vec<Spectrogram>,
    pub negatives: Vec<Spectrogram>,
    pub stats: NormStats,
    /// Positive spectrograms dropped by the NDVI filter.
    pub ndvi_removed: usize,
    pub warnings: Vec<String>,
}

impl PixelDataset {
    /// `(spectrogram, target)` pairs, positives first.
    pub fn samples(&self) -> impl Iterator<Item = (&Spectrogram, f32)> {
        self.positives
            .iter()
            .map(|s| (s, 1.0))
            .chain(self.negatives.iter().map(|s| (s, 0.0)))
    }
}

/// Positives come from inside the polygons of positive patches, minus any
/// spectrogram vegetated (NDVI > 0.4) on either row; negatives are the valid
/// pixels of negative patches. Statistics are computed over the assembled
/// set and applied to it.
pub fn assemble_pixel_dataset(patches: &[LabeledPatch], opts: &PixelDatasetOptions) -> Result<PixelDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    let mut warnings = Vec::new();
    let mut ndvi_removed = 0;
    for patch in patches {
        let field = build_spectrogram_field(&patch.pair.now, &patch.pair.prev)?;
        match patch.label {
            PatchLabel::Positive => {
                let mut taken = BTreeSet::new();
                for (pi, poly) in patch.polygons.iter().enumerate() {
                    let mut kept = 0;
                    for (x, y) in poly.rasterize(field.width, field.height) {
                        let idx = y * field.width + x;
                        if !field.validity[idx] || !taken.insert(idx) {
                            continue;
                        }
                        let s = field.at(idx);
                        if ndvi(&s, 0) > NDVI_THRESHOLD || ndvi(&s, 1) > NDVI_THRESHOLD {
                            ndvi_removed += 1;
                            continue;
                        }
                        positives.push(s);
                        kept += 1;
                    }
                    if kept == 0 {
                        let msg = format!("patch {} polygon {pi} yields no positive spectrograms", patch.id);
                        log::warn!("{msg}");
                        warnings.push(msg);
                    }
                }
            }
            PatchLabel::Negative => {
                let mut all: Vec<Spectrogram> = field.spectrograms().collect();
                if let Some(cap) = opts.negatives_per_patch {
                    if all.len() > cap {
                        all.shuffle(&mut rng);
                        all.truncate(cap);
                        all.sort_by_key(|s| (s.y, s.x));
                    }
                }
                negatives.extend(all);
            }
            PatchLabel::Unlabeled | PatchLabel::Soft(_) => {}
        }
    }
    let spectra = positives.iter().chain(&negatives).flat_map(|s| s.values.iter());
    let stats = NormStats::compute(spectra)
        .map_err(|_| CoreError::InvalidInput("no spectrograms assembled from the labeled patches".into()))?;
    let norm = |v: Vec<Spectrogram>| v.iter().map(|s| stats.normalize_spectrogram(s)).collect::<Vec<_>>();
    Ok(PixelDataset {
        positives: norm(positives),
        negatives: norm(negatives),
        stats,
        ndvi_removed,
        warnings,
    })
}
