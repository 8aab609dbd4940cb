use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::geo::Polygon;
use crate::raster::BAND_COUNT;

use super::composite::CompositePair;
use super::spectrogram::NormStats;

/// Side length of a classifier patch in pixels.
pub const PATCH_SIZE: usize = 28;
/// Current and previous 12-band spectra stacked on the channel axis.
pub const PATCH_CHANNELS: usize = 2 * BAND_COUNT;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "p", rename_all = "snake_case")]
pub enum PatchLabel {
    Positive,
    Negative,
    Unlabeled,
    Soft(f32),
}

impl PatchLabel {
    /// Training target, if the label carries one.
    pub fn target(self) -> Option<f32> {
        match self {
            PatchLabel::Positive => Some(1.0),
            PatchLabel::Negative => Some(0.0),
            PatchLabel::Unlabeled => None,
            PatchLabel::Soft(p) => Some(p),
        }
    }
}

/// A normalized (28, 28, 24) patch in height-width-channel order.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchTensor {
    pub values: Vec<f32>,
    pub label: PatchLabel,
}

impl PatchTensor {
    pub const SHAPE: [usize; 3] = [PATCH_SIZE, PATCH_SIZE, PATCH_CHANNELS];
    pub const LEN: usize = PATCH_SIZE * PATCH_SIZE * PATCH_CHANNELS;

    pub fn new(values: Vec<f32>, label: PatchLabel) -> Result<Self> {
        if values.len() != Self::LEN {
            return Err(CoreError::InvalidInput(format!(
                "patch tensor needs {} values (28x28x24), got {}",
                Self::LEN,
                values.len()
            )));
        }
        Ok(PatchTensor { values, label })
    }
}

/// Normalized HWC values of the 28×28 patch at `(x0, y0)`. Pixels invalid in
/// either composite are zero (the training mean).
pub fn patch_tensor(pair: &CompositePair, x0: usize, y0: usize, stats: &NormStats) -> Result<Vec<f32>> {
    let (w, h) = pair.dims();
    if x0 + PATCH_SIZE > w || y0 + PATCH_SIZE > h {
        return Err(CoreError::InvalidInput(format!(
            "patch at ({x0},{y0}) exceeds {w}x{h} scene"
        )));
    }
    let n = w * h;
    let mut out = vec![0.0f32; PatchTensor::LEN];
    for py in 0..PATCH_SIZE {
        for px in 0..PATCH_SIZE {
            let idx = (y0 + py) * w + x0 + px;
            if !(pair.now.validity[idx] && pair.prev.validity[idx]) {
                continue;
            }
            let base = (py * PATCH_SIZE + px) * PATCH_CHANNELS;
            for b in 0..BAND_COUNT {
                out[base + b] = stats.normalize_value(b, pair.now.data[b * n + idx]);
                out[base + BAND_COUNT + b] = stats.normalize_value(b, pair.prev.data[b * n + idx]);
            }
        }
    }
    Ok(out)
}

/// A 28×28 crop of a composite pair with its label and, for positives, the
/// waste polygons in patch-local pixel coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPatch {
    pub id: String,
    pub pair: CompositePair,
    pub label: PatchLabel,
    pub polygons: Vec<Polygon>,
    /// Scene pixel of the patch's top-left corner.
    pub origin: [usize; 2],
    /// Ground truth for unlabeled synthetic patches, for evaluation only.
    pub truth: Option<bool>,
}

impl LabeledPatch {
    pub fn tensor(&self, stats: &NormStats) -> Result<PatchTensor> {
        PatchTensor::new(patch_tensor(&self.pair, 0, 0, stats)?, self.label)
    }
}
