use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CoreError, Result};
use crate::geo::YearMonth;

use super::mode::ModeName;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SiteStatus {
    Candidate,
    Confirmed,
    Rejected,
}

impl std::fmt::Display for SiteStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SiteStatus::Candidate => "candidate",
            SiteStatus::Confirmed => "confirmed",
            SiteStatus::Rejected => "rejected",
        })
    }
}

/// A detected location awaiting (or past) curator review.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSite {
    pub id: String,
    /// Scene pixel `[x, y]` of the blob center.
    pub center_px: [usize; 2],
    /// `[lon, lat]` of the center pixel's midpoint.
    pub center: [f64; 2],
    pub blob_sigma: f64,
    pub pixel_score: f32,
    pub patch_score: Option<f32>,
    pub mode: ModeName,
    pub status: SiteStatus,
    pub first_month: YearMonth,
}

/// First 16 hex digits of SHA-256 over the rounded geographic center and the
/// first detection month.
pub fn candidate_id(center: [f64; 2], first_month: YearMonth) -> String {
    let key = format!("{:.6},{:.6}@{first_month}", center[0], center[1]);
    hex::encode(&Sha256::digest(key.as_bytes())[..8])
}

/// Point features with the site's scores and status as properties.
pub fn candidates_to_geojson(sites: &[CandidateSite]) -> geojson::FeatureCollection {
    let features = sites
        .iter()
        .map(|s| {
            let mut props = geojson::JsonObject::new();
            props.insert("id".into(), s.id.clone().into());
            props.insert("mode".into(), s.mode.to_string().into());
            props.insert("pixel_score".into(), (s.pixel_score as f64).into());
            props.insert(
                "patch_score".into(),
                s.patch_score.map_or(serde_json::Value::Null, |p| (p as f64).into()),
            );
            props.insert("blob_sigma".into(), s.blob_sigma.into());
            props.insert("status".into(), s.status.to_string().into());
            props.insert("first_month".into(), s.first_month.to_string().into());
            props.insert("center_px".into(), serde_json::json!(s.center_px));
            geojson::Feature {
                bbox: None,
                geometry: Some(geojson::Geometry::new(geojson::Value::Point(s.center.to_vec()))),
                id: Some(geojson::feature::Id::String(s.id.clone())),
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

pub fn candidates_from_geojson(fc: &geojson::FeatureCollection) -> Result<Vec<CandidateSite>> {
    fc.features
        .iter()
        .map(|f| {
            let bad = |m: &str| CoreError::Format(format!("candidate feature: {m}"));
            let props = f.properties.as_ref().ok_or_else(|| bad("missing properties"))?;
            let get = |k: &str| props.get(k).cloned().ok_or_else(|| bad(&format!("missing property {k}")));
            let center = match f.geometry.as_ref().map(|g| &g.value) {
                Some(geojson::Value::Point(p)) if p.len() >= 2 => [p[0], p[1]],
                _ => return Err(bad("geometry must be a point")),
            };
            Ok(CandidateSite {
                id: serde_json::from_value(get("id")?)?,
                center_px: serde_json::from_value(get("center_px")?)?,
                center,
                blob_sigma: serde_json::from_value(get("blob_sigma")?)?,
                pixel_score: serde_json::from_value(get("pixel_score")?)?,
                patch_score: serde_json::from_value(get("patch_score")?)?,
                mode: serde_json::from_value(get("mode")?)?,
                status: serde_json::from_value(get("status")?)?,
                first_month: serde_json::from_value(get("first_month")?)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_depend_on_location_and_month() {
        let t = YearMonth::new(2021, 3).unwrap();
        let a = candidate_id([115.1, -8.5], t);
        assert_eq!(a, candidate_id([115.1, -8.5], t));
        assert_ne!(a, candidate_id([115.1, -8.6], t));
        assert_ne!(a, candidate_id([115.1, -8.5], t.plus(1)));
        assert_eq!(a.len(), 16);
    }

    #[test]
    fn geojson_round_trip() {
        let t = YearMonth::new(2021, 3).unwrap();
        let site = CandidateSite {
            id: candidate_id([115.25, -8.61], t),
            center_px: [40, 12],
            center: [115.25, -8.61],
            blob_sigma: 3.5,
            pixel_score: 0.75,
            patch_score: Some(0.5),
            mode: ModeName::High,
            status: SiteStatus::Candidate,
            first_month: t,
        };
        let text = serde_json::to_string(&candidates_to_geojson(&[site.clone()])).unwrap();
        let fc: geojson::FeatureCollection = text.parse::<geojson::GeoJson>().unwrap().try_into().unwrap();
        assert_eq!(candidates_from_geojson(&fc).unwrap(), vec![site]);
    }
}
