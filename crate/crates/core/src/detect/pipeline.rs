use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::dataengine::{build_spectrogram_field, CompositePair, NormStats};
use crate::error::{CoreError, Result};
use crate::geo::{GeoTransform, YearMonth};
use crate::models::{PatchClassifier, PixelClassifier};
use crate::raster::{write_score_plane, RasterFrame};

use super::blobs::{detect_blobs, Blob};
use super::candidate::{candidate_id, candidates_to_geojson, CandidateSite, SiteStatus};
use super::heatmap::{average_timesteps, infer_heatmap_tiled, Heatmap};
use super::mode::SensitivityMode;
use super::patch_grid::{infer_patch_grid, PatchScoreGrid};
use super::validate::{cross_validate, CrossValidation};

pub struct DetectionModels<'a> {
    pub pixel: &'a PixelClassifier,
    pub patch: &'a PatchClassifier,
    pub stats: &'a NormStats,
}

/// Tile side and worker count for heatmap inference; neither changes the
/// output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tiling {
    pub tile: usize,
    /// 0 uses the global thread pool's size.
    pub workers: usize,
}

impl Default for Tiling {
    fn default() -> Self {
        Tiling { tile: 128, workers: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct DetectionOutput {
    /// One heatmap per requested timestep, in request order.
    pub heatmaps: Vec<Heatmap>,
    pub mean_heatmap: Heatmap,
    /// Element-wise mean of the per-timestep patch grids.
    pub grid: PatchScoreGrid,
    pub blobs: Vec<Blob>,
    /// Blob candidates before patch cross-validation.
    pub candidates: Vec<CandidateSite>,
    pub validation: CrossValidation,
}

impl DetectionOutput {
    pub fn accepted(&self) -> &[CandidateSite] {
        &self.validation.kept
    }
}

#[derive(Serialize)]
struct DetectionReport<'a> {
    mode: String,
    timesteps: Vec<String>,
    blobs: usize,
    accepted: Vec<&'a str>,
    dropped: Vec<&'a str>,
    uncovered: Vec<&'a str>,
}

/// Compositing, spectrogram pairing, pixel heatmaps, timestep averaging, blob
/// detection and patch cross-validation for the windows starting at each of
/// `timesteps`. Artifacts are written under `out_dir` when given.
pub fn run_detection(
    frames: &[RasterFrame],
    models: &DetectionModels<'_>,
    mode: &SensitivityMode,
    timesteps: &[YearMonth],
    tiling: Tiling,
    geo: &GeoTransform,
    out_dir: Option<&Path>,
) -> Result<DetectionOutput> {
    if timesteps.is_empty() {
        return Err(CoreError::InvalidInput("no timesteps requested".into()));
    }
    let mut heatmaps = Vec::with_capacity(timesteps.len());
    let mut grids = Vec::with_capacity(timesteps.len());
    for &t in timesteps {
        let pair = CompositePair::from_frames(frames, t).map_err(CoreError::at_stage("compositing"))?;
        let field = build_spectrogram_field(&pair.now, &pair.prev).map_err(CoreError::at_stage("spectrogram pairing"))?;
        let workers = if tiling.workers == 0 { rayon::current_num_threads() } else { tiling.workers };
        let heat = infer_heatmap_tiled(models.pixel, &field, models.stats, tiling.tile, workers);
        heatmaps.push(heat.map_err(CoreError::at_stage("pixel inference"))?);
        grids.push(infer_patch_grid(models.patch, &pair, models.stats).map_err(CoreError::at_stage("patch inference"))?);
        log::info!("scored window starting {t}");
    }
    let mean_heatmap = average_timesteps(&heatmaps).map_err(CoreError::at_stage("timestep averaging"))?;
    let grid = mean_grid(&grids)?;
    let blobs = detect_blobs(&mean_heatmap, mode);
    let candidates: Vec<CandidateSite> = blobs
        .iter()
        .map(|b| {
            let center = geo.pixel_to_lonlat(b.x as f64 + 0.5, b.y as f64 + 0.5);
            let first_month = timesteps
                .iter()
                .zip(&heatmaps)
                .filter(|(_, h)| h.at(b.x, b.y) >= mode.pixel_threshold)
                .map(|(&t, _)| t)
                .min()
                .unwrap_or_else(|| *timesteps.iter().min().expect("non-empty"));
            CandidateSite {
                id: candidate_id(center, first_month),
                center_px: [b.x, b.y],
                center,
                blob_sigma: b.sigma,
                pixel_score: disk_mean(&mean_heatmap, b),
                patch_score: None,
                mode: mode.name,
                status: SiteStatus::Candidate,
                first_month,
            }
        })
        .collect();
    let validation = cross_validate(&candidates, &grid, mode);
    log::info!(
        "{} blobs, {} accepted, {} dropped, {} outside patch coverage",
        blobs.len(),
        validation.kept.len(),
        validation.dropped.len(),
        validation.uncovered.len()
    );
    let out = DetectionOutput {
        heatmaps,
        mean_heatmap,
        grid,
        blobs,
        candidates,
        validation,
    };
    if let Some(dir) = out_dir {
        persist(dir, &out, mode, timesteps, geo).map_err(CoreError::at_stage("writing artifacts"))?;
    }
    Ok(out)
}

fn mean_grid(grids: &[PatchScoreGrid]) -> Result<PatchScoreGrid> {
    let first = &grids[0];
    let mut scores = vec![0f32; first.scores.len()];
    for g in grids {
        if (g.cols, g.rows) != (first.cols, first.rows) {
            return Err(CoreError::Dimensions {
                expected: (first.cols, first.rows),
                actual: (g.cols, g.rows),
            });
        }
        scores.iter_mut().zip(&g.scores).for_each(|(a, &s)| *a += s);
    }
    scores.iter_mut().for_each(|s| *s /= grids.len() as f32);
    PatchScoreGrid::new(first.cols, first.rows, scores)
}

fn ids(v: &[CandidateSite]) -> Vec<&str> {
    v.iter().map(|c| c.id.as_str()).collect()
}

/// Mean heatmap score over valid pixels within the blob radius σ√2.
fn disk_mean(h: &Heatmap, b: &Blob) -> f32 {
    let r = b.sigma * std::f64::consts::SQRT_2;
    let ri = r.ceil() as isize;
    let (mut sum, mut n) = (0f64, 0usize);
    for dy in -ri..=ri {
        for dx in -ri..=ri {
            let (x, y) = (b.x as isize + dx, b.y as isize + dy);
            if x < 0 || y < 0 || x >= h.width as isize || y >= h.height as isize {
                continue;
            }
            let i = y as usize * h.width + x as usize;
            if ((dx * dx + dy * dy) as f64) <= r * r && h.validity[i] {
                sum += h.scores[i] as f64;
                n += 1;
            }
        }
    }
    if n == 0 {
        0.0
    } else {
        (sum / n as f64) as f32
    }
}

fn persist(dir: &Path, out: &DetectionOutput, mode: &SensitivityMode, timesteps: &[YearMonth], geo: &GeoTransform) -> Result<()> {
    let heat_dir = dir.join("heatmaps");
    for (t, h) in timesteps.iter().zip(&out.heatmaps) {
        write_score_plane(&heat_dir, &format!("heatmap_{t}"), (h.width, h.height), h.origin, &h.scores, &h.validity, geo, &t.to_string())?;
    }
    let m = &out.mean_heatmap;
    write_score_plane(&heat_dir, "heatmap_mean", (m.width, m.height), m.origin, &m.scores, &m.validity, geo, "mean")?;
    let g = &out.grid;
    write_score_plane(dir, "patch_grid", (g.cols, g.rows), [0, 0], &g.scores, &vec![true; g.scores.len()], geo, "patch grid, stride 8")?;
    fs::write(
        dir.join("candidates.geojson"),
        serde_json::to_vec_pretty(&candidates_to_geojson(&out.validation.kept))?,
    )?;
    let report = DetectionReport {
        mode: mode.name.to_string(),
        timesteps: timesteps.iter().map(|t| t.to_string()).collect(),
        blobs: out.blobs.len(),
        accepted: ids(&out.validation.kept),
        dropped: ids(&out.validation.dropped),
        uncovered: ids(&out.validation.uncovered),
    };
    fs::write(dir.join("detection_report.json"), serde_json::to_vec_pretty(&report)?)?;
    Ok(())
}
