use rayon::prelude::*;

use crate::dataengine::{patch_tensor, CompositePair, NormStats, PatchTensor, PATCH_SIZE};
use crate::error::{CoreError, Result};
use crate::models::PatchClassifier;
use wastemap_nn::Tensor;

/// Lattice spacing of patch placements in pixels.
pub const GRID_STRIDE: usize = 8;

/// Patch scores on the stride-8 lattice; cell `(col, row)` is the patch
/// whose top-left pixel is `(col · 8, row · 8)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchScoreGrid {
    pub cols: usize,
    pub rows: usize,
    pub stride: usize,
    pub extent: usize,
    pub scores: Vec<f32>,
}

impl PatchScoreGrid {
    /// Lattice size for a `width × height` scene.
    pub fn dims_for(width: usize, height: usize) -> Result<(usize, usize)> {
        if width < PATCH_SIZE || height < PATCH_SIZE {
            return Err(CoreError::InvalidInput(format!(
                "scene {width}x{height} is smaller than one {PATCH_SIZE}x{PATCH_SIZE} patch"
            )));
        }
        Ok(((width - PATCH_SIZE) / GRID_STRIDE + 1, (height - PATCH_SIZE) / GRID_STRIDE + 1))
    }

    pub fn new(cols: usize, rows: usize, scores: Vec<f32>) -> Result<Self> {
        if scores.len() != cols * rows {
            return Err(CoreError::InvalidInput(format!(
                "{} scores for a {cols}x{rows} grid",
                scores.len()
            )));
        }
        Ok(PatchScoreGrid {
            cols,
            rows,
            stride: GRID_STRIDE,
            extent: PATCH_SIZE,
            scores,
        })
    }

    pub fn score(&self, col: usize, row: usize) -> f32 {
        self.scores[row * self.cols + col]
    }

    /// Top-left scene pixel of a lattice cell.
    pub fn to_pixel(&self, col: usize, row: usize) -> [usize; 2] {
        [col * self.stride, row * self.stride]
    }

    /// Lattice cell placed at a scene pixel, if the pixel is a placement.
    pub fn from_pixel(&self, x: usize, y: usize) -> Option<(usize, usize)> {
        let (c, r) = (x / self.stride, y / self.stride);
        (x % self.stride == 0 && y % self.stride == 0 && c < self.cols && r < self.rows).then_some((c, r))
    }

    /// Cells whose patch extent contains scene pixel `(x, y)`.
    pub fn covering(&self, x: usize, y: usize) -> Vec<(usize, usize)> {
        let span = |p: usize, n: usize| {
            let lo = (p + 1).saturating_sub(self.extent).div_ceil(self.stride);
            let hi = (p / self.stride).min(n.saturating_sub(1));
            if n == 0 || lo > hi {
                0..0
            } else {
                lo..hi + 1
            }
        };
        let mut out = Vec::new();
        for r in span(y, self.rows) {
            for c in span(x, self.cols) {
                out.push((c, r));
            }
        }
        out
    }
}

/// Slides the patch classifier over the scene with stride 8, one forward
/// pass per placement.
pub fn infer_patch_grid(model: &PatchClassifier, pair: &CompositePair, stats: &NormStats) -> Result<PatchScoreGrid> {
    let (w, h) = pair.dims();
    let (cols, rows) = PatchScoreGrid::dims_for(w, h)?;
    let rows_scores: Vec<Vec<f32>> = (0..rows)
        .into_par_iter()
        .map(|r| {
            let mut data = Vec::with_capacity(cols * PatchTensor::LEN);
            for c in 0..cols {
                data.extend(patch_tensor(pair, c * GRID_STRIDE, r * GRID_STRIDE, stats)?);
            }
            let batch = Tensor::from_vec(&[cols, PATCH_SIZE, PATCH_SIZE, PatchTensor::SHAPE[2]], data)?;
            Ok(model.net.forward(&batch)?.into_data())
        })
        .collect::<Result<_>>()?;
    PatchScoreGrid::new(cols, rows, rows_scores.concat())
}
