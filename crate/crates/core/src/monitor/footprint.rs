use serde::{Deserialize, Serialize};

use crate::dataengine::NormStats;
use crate::error::{CoreError, Result};
use crate::geo::{GeoTransform, YearMonth};
use crate::models::PixelClassifier;
use crate::raster::RasterFrame;

use super::contours::{extract_contours, Contour};
use super::series::{monthly_heatmaps, rolling_mask, MonthlySeries, FOOTPRINT_THRESHOLD};

/// Axis-aligned pixel window of a scene.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
}

impl Region {
    /// Square of side `2 · half + 1` around `center`, clipped to the scene.
    pub fn around(center: [usize; 2], half: usize, scene: (usize, usize)) -> Self {
        let x0 = center[0].saturating_sub(half);
        let y0 = center[1].saturating_sub(half);
        Region {
            x0,
            y0,
            width: (center[0] + half + 1).min(scene.0) - x0,
            height: (center[1] + half + 1).min(scene.1) - y0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FootprintRecord {
    pub month: YearMonth,
    pub contours: Vec<Contour>,
    pub area_ha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FootprintSeries {
    pub site_id: String,
    records: Vec<FootprintRecord>,
}

impl FootprintSeries {
    pub fn new(site_id: impl Into<String>) -> Self {
        FootprintSeries {
            site_id: site_id.into(),
            records: Vec::new(),
        }
    }

    /// Appends a record; months must be strictly increasing.
    pub fn push(&mut self, record: FootprintRecord) -> Result<()> {
        if let Some(last) = self.records.last() {
            if record.month <= last.month {
                return Err(CoreError::InvalidInput(format!(
                    "footprint for {} follows {} in site {}",
                    record.month, last.month, self.site_id
                )));
            }
        }
        if !(record.area_ha >= 0.0) {
            return Err(CoreError::InvalidInput(format!("negative footprint area {}", record.area_ha)));
        }
        self.records.push(record);
        Ok(())
    }

    pub fn records(&self) -> &[FootprintRecord] {
        &self.records
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaSeries {
    pub points: Vec<(YearMonth, f64)>,
    /// `None` for an empty series.
    pub mean_ha: Option<f64>,
}

pub fn area_series(fs: &FootprintSeries) -> AreaSeries {
    let points: Vec<(YearMonth, f64)> = fs.records.iter().map(|r| (r.month, r.area_ha)).collect();
    let mean_ha = (!points.is_empty()).then(|| points.iter().map(|p| p.1).sum::<f64>() / points.len() as f64);
    AreaSeries { points, mean_ha }
}

/// Monthly footprints of one site: heatmaps over `region`, each gated by the
/// rolling median of the following months, then traced into contours.
pub fn monitor_site(
    frames: &[RasterFrame],
    site_id: &str,
    region: Region,
    pixel: &PixelClassifier,
    stats: &NormStats,
    geo: &GeoTransform,
) -> Result<(FootprintSeries, MonthlySeries)> {
    let monthly = monthly_heatmaps(frames, region, pixel, stats)?;
    let mut fs = FootprintSeries::new(site_id);
    for (i, &month) in monthly.months.iter().enumerate() {
        let masked = rolling_mask(&monthly.heatmaps, i)?;
        let contours = extract_contours(&masked, FOOTPRINT_THRESHOLD);
        let area_ha = contours.iter().map(|c| c.hectares(geo)).sum();
        fs.push(FootprintRecord { month, contours, area_ha })?;
    }
    Ok((fs, monthly))
}

fn ring_lonlat(ring: &[[f64; 2]], geo: &GeoTransform) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = ring.iter().map(|p| geo.pixel_to_lonlat(p[0], p[1]).to_vec()).collect();
    if let Some(first) = out.first().cloned() {
        out.push(first);
    }
    out
}

/// One MultiPolygon feature per month with `{site_id, month, area_ha}`.
pub fn footprints_to_geojson(fs: &FootprintSeries, geo: &GeoTransform) -> geojson::FeatureCollection {
    let features = fs
        .records
        .iter()
        .map(|r| {
            let polys: Vec<Vec<Vec<Vec<f64>>>> = r
                .contours
                .iter()
                .map(|c| {
                    std::iter::once(&c.exterior)
                        .chain(&c.holes)
                        .map(|p| ring_lonlat(&p.exterior, geo))
                        .collect()
                })
                .collect();
            let mut props = geojson::JsonObject::new();
            props.insert("site_id".into(), fs.site_id.clone().into());
            props.insert("month".into(), r.month.to_string().into());
            props.insert("area_ha".into(), r.area_ha.into());
            geojson::Feature {
                bbox: None,
                geometry: Some(geojson::Geometry::new(geojson::Value::MultiPolygon(polys))),
                id: Some(geojson::feature::Id::String(r.month.to_string())),
                properties: Some(props),
                foreign_members: None,
            }
        })
        .collect();
    geojson::FeatureCollection {
        bbox: None,
        features,
        foreign_members: None,
    }
}
