use serde::{Deserialize, Serialize};

use crate::dataengine::synth::River;
use crate::error::{CoreError, Result};
use crate::geo::GeoTransform;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaterwayKind {
    River,
    Stream,
    Canal,
    Waterbody,
}

impl std::str::FromStr for WaterwayKind {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "river" => Ok(WaterwayKind::River),
            "stream" => Ok(WaterwayKind::Stream),
            "canal" => Ok(WaterwayKind::Canal),
            "waterbody" | "water" | "lake" => Ok(WaterwayKind::Waterbody),
            other => Err(CoreError::InvalidInput(format!(
                "unknown waterway type {other:?}; expected river, stream, canal or waterbody"
            ))),
        }
    }
}

/// A polyline, or a closed ring for waterbodies, in planar meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaterwayFeature {
    pub name: String,
    pub kind: WaterwayKind,
    pub points: Vec<[f64; 2]>,
    pub closed: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct WaterwaySet {
    features: Vec<WaterwayFeature>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaterwayDistance {
    pub meters: f64,
    pub name: String,
    pub kind: WaterwayKind,
}

impl WaterwaySet {
    pub fn new(features: Vec<WaterwayFeature>) -> Result<Self> {
        for f in &features {
            let need = if f.closed { 3 } else { 2 };
            if f.points.len() < need {
                return Err(CoreError::InvalidInput(format!(
                    "waterway {:?} has {} vertices, needs at least {need}",
                    f.name,
                    f.points.len()
                )));
            }
        }
        Ok(WaterwaySet { features })
    }

    pub fn features(&self) -> &[WaterwayFeature] {
        &self.features
    }

    /// Scene rivers, whose paths are in pixel coordinates.
    pub fn from_rivers(rivers: &[River], geo: &GeoTransform) -> Result<Self> {
        let features = rivers
            .iter()
            .map(|r| {
                Ok(WaterwayFeature {
                    name: r.name.clone(),
                    kind: r.tag.parse()?,
                    points: r.path.iter().map(|p| geo.pixel_to_meters(p[0], p[1])).collect(),
                    closed: false,
                })
            })
            .collect::<Result<_>>()?;
        WaterwaySet::new(features)
    }

    /// Reads LineString, MultiLineString, Polygon and MultiPolygon features
    /// in lon/lat, projecting them into `geo`'s planar frame. The type comes
    /// from a `waterway` or `kind` property.
    pub fn from_geojson(fc: &geojson::FeatureCollection, geo: &GeoTransform) -> Result<Self> {
        let project = |p: &Vec<f64>| -> Result<[f64; 2]> {
            if p.len() < 2 {
                return Err(CoreError::Format("waterway position needs two coordinates".into()));
            }
            let [x, y] = geo.lonlat_to_pixel(p[0], p[1]);
            Ok(geo.pixel_to_meters(x, y))
        };
        let mut features = Vec::new();
        for (i, f) in fc.features.iter().enumerate() {
            let prop = |k: &str| f.properties.as_ref().and_then(|p| p.get(k)).and_then(|v| v.as_str()).map(str::to_owned);
            let name = prop("name").unwrap_or_else(|| format!("waterway-{i}"));
            let kind: WaterwayKind = prop("waterway")
                .or_else(|| prop("kind"))
                .ok_or_else(|| CoreError::Format(format!("waterway {name:?} lacks a waterway/kind property")))?
                .parse()?;
            let mut push = |line: &Vec<Vec<f64>>, closed: bool| -> Result<()> {
                let mut points = line.iter().map(project).collect::<Result<Vec<_>>>()?;
                if closed && points.len() > 1 && points.first() == points.last() {
                    points.pop();
                }
                features.push(WaterwayFeature {
                    name: name.clone(),
                    kind,
                    points,
                    closed,
                });
                Ok(())
            };
            match f.geometry.as_ref().map(|g| &g.value) {
                Some(geojson::Value::LineString(l)) => push(l, false)?,
                Some(geojson::Value::MultiLineString(ls)) => ls.iter().try_for_each(|l| push(l, false))?,
                Some(geojson::Value::Polygon(rings)) => rings.iter().try_for_each(|r| push(r, true))?,
                Some(geojson::Value::MultiPolygon(ps)) => ps.iter().flatten().try_for_each(|r| push(r, true))?,
                _ => return Err(CoreError::Format(format!("waterway {name:?} must be a line or polygon"))),
            }
        }
        WaterwaySet::new(features)
    }

    pub fn to_geojson(&self, geo: &GeoTransform) -> geojson::FeatureCollection {
        let to_lonlat = |p: &[f64; 2]| geo.pixel_to_lonlat(p[0] / geo.pixel_size_m, p[1] / geo.pixel_size_m).to_vec();
        let features = self
            .features
            .iter()
            .map(|f| {
                let mut line: Vec<Vec<f64>> = f.points.iter().map(to_lonlat).collect();
                let value = if f.closed {
                    line.push(line[0].clone());
                    geojson::Value::Polygon(vec![line])
                } else {
                    geojson::Value::LineString(line)
                };
                let mut props = geojson::JsonObject::new();
                props.insert("name".into(), f.name.clone().into());
                props.insert("waterway".into(), serde_json::to_value(f.kind).expect("enum serializes"));
                geojson::Feature {
                    bbox: None,
                    geometry: Some(geojson::Geometry::new(value)),
                    id: None,
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
}

/// Euclidean distance from `p` to the closed segment `ab`.
pub fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    };
    let (fx, fy) = (a[0] + t * dx, a[1] + t * dy);
    ((p[0] - fx).powi(2) + (p[1] - fy).powi(2)).sqrt()
}

fn ring_contains(ring: &[[f64; 2]], p: [f64; 2]) -> bool {
    crate::geo::Polygon::new(ring.to_vec()).contains(p)
}

/// Distance in meters from a planar point to the nearest waterway segment,
/// zero inside a waterbody ring, with the nearest feature's name and type.
pub fn distance_to_waterway(p: [f64; 2], set: &WaterwaySet) -> Result<WaterwayDistance> {
    let mut best: Option<WaterwayDistance> = None;
    for f in &set.features {
        let n = f.points.len();
        let segs = if f.closed { n } else { n - 1 };
        let mut d = (0..segs)
            .map(|i| point_segment_distance(p, f.points[i], f.points[(i + 1) % n]))
            .fold(f64::INFINITY, f64::min);
        if f.closed && ring_contains(&f.points, p) {
            d = 0.0;
        }
        if best.as_ref().map_or(true, |b| d < b.meters) {
            best = Some(WaterwayDistance {
                meters: d,
                name: f.name.clone(),
                kind: f.kind,
            });
        }
    }
    best.ok_or_else(|| CoreError::InvalidInput("waterway set is empty".into()))
}
