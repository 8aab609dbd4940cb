use crate::error::{CoreError, Result};
use crate::geo::{Window, YearMonth};
use crate::raster::{Composite, RasterFrame, BAND_COUNT};

/// Months between the start of the previous and the current compositing window.
pub const PAIR_OFFSET_MONTHS: i32 = 6;

/// Per pixel and band, the minimum over frames in `window` whose mask is
/// clear. Pixels masked in every frame are invalid and hold zeros.
pub fn min_composite(frames: &[RasterFrame], window: Window) -> Result<Composite> {
    let selected: Vec<&RasterFrame> = frames.iter().filter(|f| window.contains(f.timestamp)).collect();
    let Some(first) = selected.first() else {
        return Err(CoreError::EmptyWindow {
            window: window.to_string(),
            available: frames.iter().map(|f| f.timestamp.to_string()).collect(),
        });
    };
    let (width, height) = (first.width, first.height);
    for f in &selected {
        if (f.width, f.height) != (width, height) {
            return Err(CoreError::Dimensions {
                expected: (width, height),
                actual: (f.width, f.height),
            });
        }
    }
    let n = width * height;
    let mut data = vec![f32::INFINITY; BAND_COUNT * n];
    let mut validity = vec![false; n];
    for f in &selected {
        for (idx, valid) in validity.iter_mut().enumerate() {
            if !f.mask[idx] {
                *valid = true;
            }
        }
        for b in 0..BAND_COUNT {
            let src = f.band(b);
            let dst = &mut data[b * n..(b + 1) * n];
            for ((d, &s), &m) in dst.iter_mut().zip(src).zip(&f.mask) {
                if !m && s < *d {
                    *d = s;
                }
            }
        }
    }
    for b in 0..BAND_COUNT {
        for (idx, valid) in validity.iter().enumerate() {
            if !valid {
                data[b * n + idx] = 0.0;
            }
        }
    }
    Ok(Composite {
        width,
        height,
        data,
        validity,
        window,
    })
}

/// A current composite and the composite six months earlier.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositePair {
    pub now: Composite,
    pub prev: Composite,
}

impl CompositePair {
    /// Composites the windows starting at `now_start` and six months before.
    pub fn from_frames(frames: &[RasterFrame], now_start: YearMonth) -> Result<Self> {
        let now = min_composite(frames, Window::quarter(now_start))?;
        let prev = min_composite(frames, Window::quarter(now_start.plus(-PAIR_OFFSET_MONTHS)))?;
        Ok(CompositePair { now, prev })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.now.width, self.now.height)
    }

    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<CompositePair> {
        Ok(CompositePair {
            now: self.now.crop(x0, y0, w, h)?,
            prev: self.prev.crop(x0, y0, w, h)?,
        })
    }
}

/// Window starts `t` for which both `t` and `t - 6` have data in `frames`.
/// With `full_windows`, the current window must also be complete.
pub fn pair_starts(frames: &[RasterFrame], full_windows: bool) -> Vec<YearMonth> {
    let (Some(first), Some(last)) = (
        frames.iter().map(|f| f.timestamp).min(),
        frames.iter().map(|f| f.timestamp).max(),
    ) else {
        return Vec::new();
    };
    let tail = if full_windows { Window::COMPOSITE_SPAN as i32 - 1 } else { 0 };
    let mut out = Vec::new();
    let mut t = first.plus(PAIR_OFFSET_MONTHS);
    while t.plus(tail) <= last {
        out.push(t);
        t = t.plus(1);
    }
    out
}
