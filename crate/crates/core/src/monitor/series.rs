use crate::dataengine::{build_spectrogram_field, pair_starts, CompositePair, NormStats};
use crate::detect::{infer_heatmap, Heatmap};
use crate::error::{CoreError, Result};
use crate::geo::YearMonth;
use crate::models::PixelClassifier;
use crate::raster::RasterFrame;

use super::footprint::Region;

/// Number of following frames whose median gates the current frame.
pub const ROLLING_WINDOW: usize = 8;

/// Score at or above which a masked pixel belongs to the footprint.
pub const FOOTPRINT_THRESHOLD: f32 = 0.5;

/// Heatmaps of one region for consecutive months.
#[derive(Debug, Clone, Default)]
pub struct MonthlySeries {
    pub months: Vec<YearMonth>,
    pub heatmaps: Vec<Heatmap>,
    /// Months without a usable composite pair.
    pub gaps: Vec<YearMonth>,
}

/// One heatmap per month whose current and six-months-earlier composites
/// both have valid pixels in `region`. Windows at the end of the catalog may
/// be shorter than three months.
pub fn monthly_heatmaps(frames: &[RasterFrame], region: Region, pixel: &PixelClassifier, stats: &NormStats) -> Result<MonthlySeries> {
    if frames.is_empty() {
        return Err(CoreError::InvalidInput("empty raster catalog".into()));
    }
    let cropped: Vec<RasterFrame> = frames
        .iter()
        .map(|f| f.crop(region.x0, region.y0, region.width, region.height))
        .collect::<Result<_>>()?;
    let mut out = MonthlySeries::default();
    for t in pair_starts(&cropped, false) {
        let pair = match CompositePair::from_frames(&cropped, t) {
            Ok(p) => p,
            Err(CoreError::EmptyWindow { .. }) => {
                out.gaps.push(t);
                continue;
            }
            Err(e) => return Err(e),
        };
        let field = build_spectrogram_field(&pair.now, &pair.prev)?;
        if !field.validity.iter().any(|&v| v) {
            out.gaps.push(t);
            continue;
        }
        let mut heat = infer_heatmap(pixel, &field, stats)?;
        heat.origin = [region.x0, region.y0];
        out.months.push(t);
        out.heatmaps.push(heat);
    }
    if !out.gaps.is_empty() {
        log::warn!("no usable composites for months {:?}", out.gaps.iter().map(|t| t.to_string()).collect::<Vec<_>>());
    }
    Ok(out)
}

/// Frame `index` multiplied by the binary mask `median(next frames) ≥ 0.5`,
/// where the median runs over up to eight following frames. The last frame
/// has no followers and passes unchanged.
pub fn rolling_mask(series: &[Heatmap], index: usize) -> Result<Heatmap> {
    let current = series.get(index).ok_or(CoreError::OutOfRange {
        index,
        len: series.len(),
    })?;
    let followers = &series[index + 1..(index + 1 + ROLLING_WINDOW).min(series.len())];
    for f in followers {
        if (f.width, f.height) != (current.width, current.height) {
            return Err(CoreError::Dimensions {
                expected: (current.width, current.height),
                actual: (f.width, f.height),
            });
        }
    }
    let mut out = current.clone();
    if followers.is_empty() {
        return Ok(out);
    }
    let mut vals = Vec::with_capacity(followers.len());
    for (i, s) in out.scores.iter_mut().enumerate() {
        vals.clear();
        vals.extend(followers.iter().map(|f| f.scores[i]));
        vals.sort_by(f32::total_cmp);
        let k = vals.len();
        let median = if k % 2 == 1 {
            vals[k / 2]
        } else {
            (vals[k / 2 - 1] + vals[k / 2]) / 2.0
        };
        if median < FOOTPRINT_THRESHOLD {
            *s = 0.0;
        }
    }
    Ok(out)
}
