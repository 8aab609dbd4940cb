use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::geo::Window;
use crate::raster::{Composite, Spectrum, BAND_COUNT, NIR, RED};

use super::composite::PAIR_OFFSET_MONTHS;

/// Positive-class spectrograms with NDVI strictly above this are dropped.
pub const NDVI_THRESHOLD: f32 = 0.4;

/// A pixel's spectra in the current (row 0) and previous (row 1) composites.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spectrogram {
    pub values: [Spectrum; 2],
    pub x: usize,
    pub y: usize,
    pub normalized: bool,
}

impl Spectrogram {
    pub fn flat(&self) -> [f32; 2 * BAND_COUNT] {
        std::array::from_fn(|i| self.values[i / BAND_COUNT][i % BAND_COUNT])
    }
}

/// `(NIR − Red) / (NIR + Red)`, or 0 when the denominator vanishes.
pub fn ndvi_of(s: &Spectrum) -> f32 {
    let (nir, red) = (s[NIR], s[RED]);
    let sum = nir + red;
    if sum == 0.0 {
        0.0
    } else {
        (nir - red) / sum
    }
}

/// NDVI of one temporal row of an un-normalized spectrogram.
pub fn ndvi(s: &Spectrogram, row: usize) -> f32 {
    ndvi_of(&s.values[row])
}

/// Dense spectrogram raster: 24 values per pixel (current spectrum, then
/// previous) and a validity plane.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrogramField {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f32>,
    pub validity: Vec<bool>,
    pub normalized: bool,
    pub window: Window,
}

impl SpectrogramField {
    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn at(&self, idx: usize) -> Spectrogram {
        let v = &self.values[idx * 2 * BAND_COUNT..(idx + 1) * 2 * BAND_COUNT];
        Spectrogram {
            values: [
                std::array::from_fn(|b| v[b]),
                std::array::from_fn(|b| v[BAND_COUNT + b]),
            ],
            x: idx % self.width,
            y: idx / self.width,
            normalized: self.normalized,
        }
    }

    /// Spectrograms of every valid pixel, in raster order.
    pub fn spectrograms(&self) -> impl Iterator<Item = Spectrogram> + '_ {
        (0..self.pixels()).filter(|&i| self.validity[i]).map(|i| self.at(i))
    }

    /// Pixels left out because either composite was invalid there.
    pub fn omitted(&self) -> Vec<(usize, usize)> {
        (0..self.pixels())
            .filter(|&i| !self.validity[i])
            .map(|i| (i % self.width, i / self.width))
            .collect()
    }

    /// Sub-field `[x0, x0 + w) × [y0, y0 + h)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<SpectrogramField> {
        if x0 + w > self.width || y0 + h > self.height {
            return Err(CoreError::InvalidInput(format!(
                "crop {w}x{h} at ({x0},{y0}) exceeds {}x{} field",
                self.width, self.height
            )));
        }
        let stride = 2 * BAND_COUNT;
        let mut values = Vec::with_capacity(w * h * stride);
        let mut validity = Vec::with_capacity(w * h);
        for y in y0..y0 + h {
            let row = y * self.width;
            values.extend_from_slice(&self.values[(row + x0) * stride..(row + x0 + w) * stride]);
            validity.extend_from_slice(&self.validity[row + x0..row + x0 + w]);
        }
        Ok(SpectrogramField {
            width: w,
            height: h,
            values,
            validity,
            normalized: self.normalized,
            window: self.window,
        })
    }
}

/// Pairs two composites six months apart into a spectrogram per pixel.
/// Pixels invalid in either composite are marked invalid (and reported by
/// [`SpectrogramField::omitted`]).
pub fn build_spectrogram_field(now: &Composite, prev: &Composite) -> Result<SpectrogramField> {
    if now.window.start.months_since(prev.window.start) != PAIR_OFFSET_MONTHS {
        return Err(CoreError::PairingOffset {
            now: now.window.to_string(),
            prev: prev.window.to_string(),
        });
    }
    if (now.width, now.height) != (prev.width, prev.height) {
        return Err(CoreError::Dimensions {
            expected: (now.width, now.height),
            actual: (prev.width, prev.height),
        });
    }
    let n = now.pixels();
    let mut values = vec![0.0f32; n * 2 * BAND_COUNT];
    for b in 0..BAND_COUNT {
        let (cur, old) = (now.band(b), prev.band(b));
        for idx in 0..n {
            values[idx * 2 * BAND_COUNT + b] = cur[idx];
            values[idx * 2 * BAND_COUNT + BAND_COUNT + b] = old[idx];
        }
    }
    let validity: Vec<bool> = now.validity.iter().zip(&prev.validity).map(|(a, b)| *a && *b).collect();
    for (idx, valid) in validity.iter().enumerate() {
        if !valid {
            values[idx * 2 * BAND_COUNT..(idx + 1) * 2 * BAND_COUNT].fill(0.0);
        }
    }
    Ok(SpectrogramField {
        width: now.width,
        height: now.height,
        values,
        validity,
        normalized: false,
        window: now.window,
    })
}

/// Per-band mean and standard deviation of the training set; the same 12
/// statistics normalize both temporal rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Spectrum,
    pub std: Spectrum,
}

impl NormStats {
    const MIN_STD: f64 = 1e-6;

    /// Statistics over every spectrum yielded (both rows of each spectrogram
    /// count as samples of the same band).
    pub fn compute<'a>(spectra: impl IntoIterator<Item = &'a Spectrum>) -> Result<Self> {
        let mut count = 0usize;
        let mut sum = [0.0f64; BAND_COUNT];
        let mut sq = [0.0f64; BAND_COUNT];
        let spectra: Vec<&Spectrum> = spectra.into_iter().collect();
        for s in &spectra {
            count += 1;
            for b in 0..BAND_COUNT {
                sum[b] += s[b] as f64;
            }
        }
        if count == 0 {
            return Err(CoreError::InvalidInput("normalization statistics need at least one sample".into()));
        }
        let mean: [f64; BAND_COUNT] = std::array::from_fn(|b| sum[b] / count as f64);
        for s in &spectra {
            for b in 0..BAND_COUNT {
                let d = s[b] as f64 - mean[b];
                sq[b] += d * d;
            }
        }
        Ok(NormStats {
            mean: std::array::from_fn(|b| mean[b] as f32),
            std: std::array::from_fn(|b| (sq[b] / count as f64).sqrt().max(Self::MIN_STD) as f32),
        })
    }

    pub fn normalize_value(&self, band: usize, v: f32) -> f32 {
        ((v as f64 - self.mean[band] as f64) / self.std[band] as f64) as f32
    }

    pub fn denormalize_value(&self, band: usize, v: f32) -> f32 {
        (v as f64 * self.std[band] as f64 + self.mean[band] as f64) as f32
    }

    pub fn normalize(&self, s: &Spectrum) -> Spectrum {
        std::array::from_fn(|b| self.normalize_value(b, s[b]))
    }

    pub fn denormalize(&self, s: &Spectrum) -> Spectrum {
        std::array::from_fn(|b| self.denormalize_value(b, s[b]))
    }

    pub fn normalize_spectrogram(&self, s: &Spectrogram) -> Spectrogram {
        if s.normalized {
            return *s;
        }
        Spectrogram {
            values: [self.normalize(&s.values[0]), self.normalize(&s.values[1])],
            normalized: true,
            ..*s
        }
    }

    /// Normalizes every valid pixel; invalid pixels stay zero.
    pub fn normalize_field(&self, field: &SpectrogramField) -> SpectrogramField {
        if field.normalized {
            return field.clone();
        }
        let mut out = field.clone();
        for (idx, chunk) in out.values.chunks_exact_mut(2 * BAND_COUNT).enumerate() {
            if !field.validity[idx] {
                continue;
            }
            for (i, v) in chunk.iter_mut().enumerate() {
                *v = self.normalize_value(i % BAND_COUNT, *v);
            }
        }
        out.normalized = true;
        out
    }
}
