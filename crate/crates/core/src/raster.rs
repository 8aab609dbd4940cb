//! Multi-band raster frames, composites and the on-disk raster container.
//!
//! Container layout: a JSON sidecar describing dimensions, band order,
//! timestamps and geotransform, next to little-endian binary planes. A frame
//! file holds the 12 band planes as `f32` followed by one `u8` mask plane
//! (1 = cloud/shadow). A heatmap file holds one `f32` score plane followed by
//! one `u8` validity plane (1 = valid).

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::geo::{GeoTransform, Window, YearMonth};

pub const BAND_COUNT: usize = 12;

/// Sentinel-2 band order used by every raster in the pipeline.
pub const BAND_NAMES: [&str; BAND_COUNT] = [
    "B01", "B02", "B03", "B04", "B05", "B06", "B07", "B08", "B8A", "B09", "B11", "B12",
];

/// Index of the red band (B04).
pub const RED: usize = 3;
/// Index of the near-infrared band (B08).
pub const NIR: usize = 7;

pub const CONTAINER_VERSION: u32 = 1;

pub type Spectrum = [f32; BAND_COUNT];

/// One acquisition: band-major reflectance planes plus a cloud/shadow mask.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterFrame {
    pub width: usize,
    pub height: usize,
    /// `BAND_COUNT` planes of `width * height` values, row-major.
    pub data: Vec<f32>,
    /// `true` where the pixel is cloud or shadow and must be ignored.
    pub mask: Vec<bool>,
    pub timestamp: YearMonth,
}

impl RasterFrame {
    pub fn new(width: usize, height: usize, timestamp: YearMonth) -> Self {
        RasterFrame {
            width,
            height,
            data: vec![0.0; BAND_COUNT * width * height],
            mask: vec![false; width * height],
            timestamp,
        }
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn band(&self, b: usize) -> &[f32] {
        let n = self.pixels();
        &self.data[b * n..(b + 1) * n]
    }

    pub fn spectrum(&self, idx: usize) -> Spectrum {
        let n = self.pixels();
        std::array::from_fn(|b| self.data[b * n + idx])
    }

    pub fn set_spectrum(&mut self, idx: usize, s: &Spectrum) {
        let n = self.pixels();
        for (b, v) in s.iter().enumerate() {
            self.data[b * n + idx] = *v;
        }
    }

    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<RasterFrame> {
        let (data, mask) = crop_planes(&self.data, &self.mask, (self.width, self.height), x0, y0, w, h)?;
        Ok(RasterFrame {
            width: w,
            height: h,
            data,
            mask,
            timestamp: self.timestamp,
        })
    }

    pub fn masked_fraction(&self) -> f64 {
        self.mask.iter().filter(|m| **m).count() as f64 / self.pixels().max(1) as f64
    }
}

fn crop_planes(
    data: &[f32],
    flags: &[bool],
    (width, height): (usize, usize),
    x0: usize,
    y0: usize,
    w: usize,
    h: usize,
) -> Result<(Vec<f32>, Vec<bool>)> {
    if x0 + w > width || y0 + h > height {
        return Err(CoreError::InvalidInput(format!(
            "crop {w}x{h} at ({x0},{y0}) exceeds {width}x{height} raster"
        )));
    }
    let n = width * height;
    let mut out = Vec::with_capacity(BAND_COUNT * w * h);
    for b in 0..BAND_COUNT {
        for y in y0..y0 + h {
            let row = b * n + y * width;
            out.extend_from_slice(&data[row + x0..row + x0 + w]);
        }
    }
    let mut out_flags = Vec::with_capacity(w * h);
    for y in y0..y0 + h {
        out_flags.extend_from_slice(&flags[y * width + x0..y * width + x0 + w]);
    }
    Ok((out, out_flags))
}

/// Per-pixel minimum over the unmasked frames of a window.
#[derive(Debug, Clone, PartialEq)]
pub struct Composite {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
    /// `false` where every input frame was masked.
    pub validity: Vec<bool>,
    pub window: Window,
}

impl Composite {
    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn band(&self, b: usize) -> &[f32] {
        let n = self.pixels();
        &self.data[b * n..(b + 1) * n]
    }

    pub fn spectrum(&self, idx: usize) -> Spectrum {
        let n = self.pixels();
        std::array::from_fn(|b| self.data[b * n + idx])
    }

    /// Sub-raster `[x0, x0 + w) × [y0, y0 + h)`; must lie inside.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Composite> {
        let (data, validity) = crop_planes(&self.data, &self.validity, (self.width, self.height), x0, y0, w, h)?;
        Ok(Composite {
            width: w,
            height: h,
            data,
            validity,
            window: self.window,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameEntry {
    pub timestamp: YearMonth,
    pub file: String,
}

/// JSON sidecar of a frame-series container.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeriesSidecar {
    pub format: String,
    pub version: u32,
    pub width: usize,
    pub height: usize,
    pub bands: Vec<String>,
    pub geotransform: GeoTransform,
    pub frames: Vec<FrameEntry>,
}

pub const SERIES_FORMAT: &str = "wastemap-raster-series";
pub const HEATMAP_FORMAT: &str = "wastemap-heatmap";

fn write_f32_plane<W: Write>(w: &mut W, plane: &[f32]) -> Result<()> {
    for v in plane {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_f32_plane(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect()
}

/// Writes a frame series as `<dir>/series.json` plus one binary file per frame.
pub fn write_series(dir: &Path, frames: &[RasterFrame], geo: &GeoTransform) -> Result<()> {
    let first = frames
        .first()
        .ok_or_else(|| CoreError::InvalidInput("cannot write an empty frame series".into()))?;
    fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(frames.len());
    for (i, f) in frames.iter().enumerate() {
        if (f.width, f.height) != (first.width, first.height) {
            return Err(CoreError::Dimensions {
                expected: (first.width, first.height),
                actual: (f.width, f.height),
            });
        }
        let file = format!("frame_{i:03}.bin");
        let mut w = BufWriter::new(fs::File::create(dir.join(&file))?);
        write_f32_plane(&mut w, &f.data)?;
        let mask: Vec<u8> = f.mask.iter().map(|&m| m as u8).collect();
        w.write_all(&mask)?;
        w.flush()?;
        entries.push(FrameEntry {
            timestamp: f.timestamp,
            file,
        });
    }
    let sidecar = SeriesSidecar {
        format: SERIES_FORMAT.into(),
        version: CONTAINER_VERSION,
        width: first.width,
        height: first.height,
        bands: BAND_NAMES.iter().map(|s| s.to_string()).collect(),
        geotransform: *geo,
        frames: entries,
    };
    fs::write(dir.join("series.json"), serde_json::to_vec_pretty(&sidecar)?)?;
    Ok(())
}

pub fn read_series(dir: &Path) -> Result<(Vec<RasterFrame>, GeoTransform)> {
    let sidecar: SeriesSidecar = serde_json::from_slice(&fs::read(dir.join("series.json"))?)?;
    if sidecar.format != SERIES_FORMAT || sidecar.version != CONTAINER_VERSION {
        return Err(CoreError::Format(format!(
            "expected {SERIES_FORMAT} v{CONTAINER_VERSION}, found {} v{}",
            sidecar.format, sidecar.version
        )));
    }
    if sidecar.bands != BAND_NAMES {
        return Err(CoreError::Format(format!("unexpected band order {:?}", sidecar.bands)));
    }
    let n = sidecar.width * sidecar.height;
    let mut frames = Vec::with_capacity(sidecar.frames.len());
    for entry in &sidecar.frames {
        let bytes = fs::read(dir.join(&entry.file))?;
        if bytes.len() != n * BAND_COUNT * 4 + n {
            return Err(CoreError::Format(format!(
                "{} holds {} bytes, expected {}",
                entry.file,
                bytes.len(),
                n * BAND_COUNT * 4 + n
            )));
        }
        let (planes, mask) = bytes.split_at(n * BAND_COUNT * 4);
        frames.push(RasterFrame {
            width: sidecar.width,
            height: sidecar.height,
            data: read_f32_plane(planes),
            mask: mask.iter().map(|&m| m != 0).collect(),
            timestamp: entry.timestamp,
        });
    }
    Ok((frames, sidecar.geotransform))
}

/// Sidecar of a persisted heatmap.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeatmapSidecar {
    pub format: String,
    pub version: u32,
    pub width: usize,
    pub height: usize,
    pub origin: [usize; 2],
    pub geotransform: GeoTransform,
    pub label: String,
    pub file: String,
}

/// Writes a score plane and validity plane under `<dir>/<stem>.{json,bin}`.
pub fn write_score_plane(
    dir: &Path,
    stem: &str,
    (width, height): (usize, usize),
    origin: [usize; 2],
    scores: &[f32],
    validity: &[bool],
    geo: &GeoTransform,
    label: &str,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let file = format!("{stem}.bin");
    let mut w = BufWriter::new(fs::File::create(dir.join(&file))?);
    write_f32_plane(&mut w, scores)?;
    let valid: Vec<u8> = validity.iter().map(|&v| v as u8).collect();
    w.write_all(&valid)?;
    w.flush()?;
    let sidecar = HeatmapSidecar {
        format: HEATMAP_FORMAT.into(),
        version: CONTAINER_VERSION,
        width,
        height,
        origin,
        geotransform: *geo,
        label: label.into(),
        file,
    };
    fs::write(dir.join(format!("{stem}.json")), serde_json::to_vec_pretty(&sidecar)?)?;
    Ok(())
}

/// Reads a plane written by [`write_score_plane`].
pub fn read_score_plane(dir: &Path, stem: &str) -> Result<(HeatmapSidecar, Vec<f32>, Vec<bool>)> {
    let sidecar: HeatmapSidecar = serde_json::from_slice(&fs::read(dir.join(format!("{stem}.json")))?)?;
    if sidecar.format != HEATMAP_FORMAT {
        return Err(CoreError::Format(format!("expected {HEATMAP_FORMAT}, found {}", sidecar.format)));
    }
    let n = sidecar.width * sidecar.height;
    let bytes = fs::read(dir.join(&sidecar.file))?;
    if bytes.len() != n * 5 {
        return Err(CoreError::Format(format!("{} holds {} bytes, expected {}", sidecar.file, bytes.len(), n * 5)));
    }
    let (s, v) = bytes.split_at(n * 4);
    Ok((sidecar, read_f32_plane(s), v.iter().map(|&b| b != 0).collect()))
}
