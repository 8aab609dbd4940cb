use rayon::prelude::*;

use crate::dataengine::{NormStats, SpectrogramField};
use crate::error::{CoreError, Result};
use crate::models::{spectrogram_batch, PixelClassifier};
use crate::raster::BAND_COUNT;

/// Per-pixel waste probabilities; invalid pixels hold 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub width: usize,
    pub height: usize,
    pub scores: Vec<f32>,
    pub validity: Vec<bool>,
    /// Scene pixel of the top-left corner.
    pub origin: [usize; 2],
}

impl Heatmap {
    pub fn zeros(width: usize, height: usize) -> Self {
        Heatmap {
            width,
            height,
            scores: vec![0.0; width * height],
            validity: vec![true; width * height],
            origin: [0, 0],
        }
    }

    pub fn from_scores(width: usize, height: usize, scores: Vec<f32>) -> Result<Self> {
        if scores.len() != width * height {
            return Err(CoreError::Dimensions {
                expected: (width, height),
                actual: (scores.len(), 1),
            });
        }
        Ok(Heatmap {
            width,
            height,
            validity: vec![true; scores.len()],
            scores,
            origin: [0, 0],
        })
    }

    pub fn at(&self, x: usize, y: usize) -> f32 {
        self.scores[y * self.width + x]
    }

    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Heatmap> {
        if x0 + w > self.width || y0 + h > self.height {
            return Err(CoreError::InvalidInput(format!(
                "crop {w}x{h} at ({x0},{y0}) exceeds {}x{} heatmap",
                self.width, self.height
            )));
        }
        let mut scores = Vec::with_capacity(w * h);
        let mut validity = Vec::with_capacity(w * h);
        for y in y0..y0 + h {
            scores.extend_from_slice(&self.scores[y * self.width + x0..y * self.width + x0 + w]);
            validity.extend_from_slice(&self.validity[y * self.width + x0..y * self.width + x0 + w]);
        }
        Ok(Heatmap {
            width: w,
            height: h,
            scores,
            validity,
            origin: [self.origin[0] + x0, self.origin[1] + y0],
        })
    }

    /// Mean score over all pixels.
    pub fn mean(&self) -> f64 {
        if self.scores.is_empty() {
            return 0.0;
        }
        self.scores.iter().map(|v| *v as f64).sum::<f64>() / self.scores.len() as f64
    }
}

fn score_tile(model: &PixelClassifier, field: &SpectrogramField, stats: &NormStats, x0: usize, y0: usize, w: usize, h: usize) -> Result<Heatmap> {
    let tile = field.crop(x0, y0, w, h)?;
    let tile = if tile.normalized { tile } else { stats.normalize_field(&tile) };
    let valid: Vec<usize> = (0..w * h).filter(|&i| tile.validity[i]).collect();
    let specs: Vec<_> = valid.iter().map(|&i| tile.at(i)).collect();
    let scores = if specs.is_empty() {
        Vec::new()
    } else {
        model.score_rows(&spectrogram_batch(&specs))?
    };
    let mut out = Heatmap {
        width: w,
        height: h,
        scores: vec![0.0; w * h],
        validity: tile.validity.clone(),
        origin: [x0, y0],
    };
    for (&i, s) in valid.iter().zip(scores) {
        out.scores[i] = s;
    }
    Ok(out)
}

/// Scores every valid pixel of `field` (normalizing with `stats` unless the
/// field already is); invalid pixels score 0 and stay flagged.
pub fn infer_heatmap(model: &PixelClassifier, field: &SpectrogramField, stats: &NormStats) -> Result<Heatmap> {
    score_tile(model, field, stats, 0, 0, field.width, field.height).map(|mut h| {
        h.origin = [0, 0];
        h
    })
}

/// Splits the field into `tile × tile` tiles scored by a pool of `workers`
/// threads and stitched back by tile index. Output equals [`infer_heatmap`]
/// exactly for any tile size and worker count.
pub fn infer_heatmap_tiled(model: &PixelClassifier, field: &SpectrogramField, stats: &NormStats, tile: usize, workers: usize) -> Result<Heatmap> {
    if tile == 0 {
        return Err(CoreError::InvalidInput("tile size must be positive".into()));
    }
    if field.values.len() != field.pixels() * 2 * BAND_COUNT {
        return Err(CoreError::InvalidInput("spectrogram field has inconsistent length".into()));
    }
    let (w, h) = (field.width, field.height);
    let mut tiles = Vec::new();
    for y0 in (0..h).step_by(tile) {
        for x0 in (0..w).step_by(tile) {
            tiles.push((x0, y0, tile.min(w - x0), tile.min(h - y0)));
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CoreError::InvalidInput(format!("cannot start worker pool: {e}")))?;
    let parts: Vec<Heatmap> = pool.install(|| {
        tiles
            .par_iter()
            .map(|&(x0, y0, tw, th)| score_tile(model, field, stats, x0, y0, tw, th))
            .collect::<Result<_>>()
    })?;
    let mut out = Heatmap::zeros(w, h);
    for part in parts {
        for ty in 0..part.height {
            let dst = (part.origin[1] + ty) * w + part.origin[0];
            out.scores[dst..dst + part.width].copy_from_slice(&part.scores[ty * part.width..(ty + 1) * part.width]);
            out.validity[dst..dst + part.width].copy_from_slice(&part.validity[ty * part.width..(ty + 1) * part.width]);
        }
    }
    Ok(out)
}

/// Per-pixel mean over the heatmaps where the pixel is valid. Values are
/// summed in sorted order, so the result does not depend on list order.
pub fn average_timesteps(heatmaps: &[Heatmap]) -> Result<Heatmap> {
    let first = heatmaps
        .first()
        .ok_or_else(|| CoreError::InvalidInput("no heatmaps to average".into()))?;
    for h in heatmaps {
        if (h.width, h.height) != (first.width, first.height) {
            return Err(CoreError::Dimensions {
                expected: (first.width, first.height),
                actual: (h.width, h.height),
            });
        }
    }
    let mut out = Heatmap::zeros(first.width, first.height);
    out.origin = first.origin;
    let mut vals = Vec::with_capacity(heatmaps.len());
    for i in 0..out.scores.len() {
        vals.clear();
        vals.extend(heatmaps.iter().filter(|h| h.validity[i]).map(|h| h.scores[i]));
        if vals.is_empty() {
            out.validity[i] = false;
            continue;
        }
        vals.sort_by(f32::total_cmp);
        let sum: f64 = vals.iter().map(|v| *v as f64).sum();
        out.scores[i] = (sum / vals.len() as f64) as f32;
    }
    Ok(out)
}
