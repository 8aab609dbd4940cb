use serde::{Deserialize, Serialize};

use crate::geo::{GeoTransform, Polygon};

use super::composite::CompositePair;
use super::patch::{LabeledPatch, PatchLabel, PATCH_SIZE};

/// Radius in pixels of the footprint assumed for a confirmed site reviewed
/// without a drawn boundary.
pub const DEFAULT_LABEL_RADIUS: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelClass {
    Positive,
    Negative,
}

/// A curator decision turned into a training label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub site_id: String,
    pub class: LabelClass,
    /// Site location as `[lon, lat]`.
    pub center: [f64; 2],
    /// Optional boundary as a `[lon, lat]` ring.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polygon: Option<Vec<[f64; 2]>>,
    pub source: String,
}

/// Cuts one patch per record out of `pair`, centered on the record (clamped
/// to the scene). Positive records carry their boundary, or a small disk when
/// none was drawn. Records whose center falls outside the scene are skipped.
pub fn patches_from_label_records(pair: &CompositePair, geo: &GeoTransform, records: &[LabelRecord]) -> Vec<LabeledPatch> {
    let (w, h) = pair.dims();
    if w < PATCH_SIZE || h < PATCH_SIZE {
        return Vec::new();
    }
    let mut out = Vec::new();
    for rec in records {
        let [cx, cy] = geo.lonlat_to_pixel(rec.center[0], rec.center[1]);
        if !(cx >= 0.0 && cy >= 0.0 && cx < w as f64 && cy < h as f64) {
            log::warn!("label record {} lies outside the scene; skipped", rec.site_id);
            continue;
        }
        let half = (PATCH_SIZE / 2) as f64;
        let x0 = ((cx - half).round().max(0.0) as usize).min(w - PATCH_SIZE);
        let y0 = ((cy - half).round().max(0.0) as usize).min(h - PATCH_SIZE);
        let Ok(crop) = pair.crop(x0, y0, PATCH_SIZE, PATCH_SIZE) else {
            continue;
        };
        let (label, polygons) = match rec.class {
            LabelClass::Negative => (PatchLabel::Negative, Vec::new()),
            LabelClass::Positive => {
                let poly = match &rec.polygon {
                    Some(ring) if ring.len() >= 3 => Polygon::new(
                        ring.iter()
                            .map(|p| {
                                let [x, y] = geo.lonlat_to_pixel(p[0], p[1]);
                                [x - x0 as f64, y - y0 as f64]
                            })
                            .collect(),
                    ),
                    _ => disk([cx - x0 as f64, cy - y0 as f64], DEFAULT_LABEL_RADIUS),
                };
                (PatchLabel::Positive, vec![poly])
            }
        };
        out.push(LabeledPatch {
            id: format!("label-{}", rec.site_id),
            pair: crop,
            label,
            polygons,
            origin: [x0, y0],
            truth: None,
        });
    }
    out
}

fn disk(center: [f64; 2], radius: f64) -> Polygon {
    let n = 16;
    Polygon::new(
        (0..n)
            .map(|i| {
                let a = std::f64::consts::TAU * i as f64 / n as f64;
                [center[0] + radius * a.cos(), center[1] + radius * a.sin()]
            })
            .collect(),
    )
}
