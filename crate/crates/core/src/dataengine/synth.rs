//! Synthetic multi-band scene generator: seasonal land-cover mosaic, planted
//! waste sites with known polygons and activity windows, greenhouse-like
//! confounders, rivers, cloud masks and haze.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::geo::{GeoTransform, Polygon, Window, YearMonth};
use crate::monitor::point_segment_distance;
use crate::raster::{RasterFrame, Spectrum, BAND_COUNT};

/// Reference reflectance spectra in band order B01..B12.
pub mod spectra {
    use crate::raster::Spectrum;

    pub const WASTE: Spectrum = [0.30, 0.32, 0.34, 0.35, 0.35, 0.36, 0.36, 0.37, 0.37, 0.30, 0.33, 0.27];
    pub const GREEN_VEG: Spectrum = [0.04, 0.04, 0.07, 0.04, 0.10, 0.28, 0.36, 0.40, 0.42, 0.30, 0.20, 0.10];
    pub const DRY_VEG: Spectrum = [0.06, 0.07, 0.10, 0.12, 0.16, 0.22, 0.25, 0.27, 0.28, 0.22, 0.26, 0.18];
    pub const BARE: Spectrum = [0.10, 0.12, 0.16, 0.22, 0.25, 0.27, 0.28, 0.29, 0.30, 0.26, 0.38, 0.32];
    pub const WATER: Spectrum = [0.07, 0.06, 0.05, 0.03, 0.02, 0.015, 0.012, 0.01, 0.01, 0.005, 0.005, 0.003];
    pub const URBAN: Spectrum = [0.14, 0.15, 0.16, 0.17, 0.18, 0.19, 0.19, 0.20, 0.20, 0.17, 0.22, 0.20];
    pub const CLOUD: Spectrum = [0.6; 12];
}

/// Relative weights of the background land covers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverMix {
    pub vegetation: f64,
    pub farmland: f64,
    pub bare: f64,
    pub water: f64,
    pub urban: f64,
}

impl Default for CoverMix {
    fn default() -> Self {
        CoverMix {
            vegetation: 0.45,
            farmland: 0.25,
            bare: 0.1,
            water: 0.05,
            urban: 0.15,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Cover {
    Vegetation,
    Farmland,
    Bare,
    Water,
    Urban,
}

/// A waste site painted with `signature` while active (bounds inclusive,
/// `None` meaning unbounded).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedSite {
    pub id: String,
    pub polygon: Polygon,
    pub signature: Spectrum,
    #[serde(default)]
    pub active_from: Option<YearMonth>,
    #[serde(default)]
    pub active_until: Option<YearMonth>,
}

impl PlantedSite {
    pub fn active_at(&self, t: YearMonth) -> bool {
        self.active_from.map_or(true, |a| t >= a) && self.active_until.map_or(true, |b| t <= b)
    }
}

/// Greenhouse-like rectangle: rows of waste-spectrum plastic separated by soil.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Confounder {
    pub id: String,
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
    /// Row repeat in pixels; the first `stripe_width` rows of each period are plastic.
    pub stripe_period: usize,
    pub stripe_width: usize,
    /// Brightness factor of the plastic rows, drawn like a waste site's.
    #[serde(default = "unit_gain")]
    pub plastic_gain: f32,
}

fn unit_gain() -> f32 {
    1.0
}

impl Confounder {
    pub fn polygon(&self) -> Polygon {
        Polygon::rectangle(
            self.x0 as f64,
            self.y0 as f64,
            (self.x0 + self.width) as f64,
            (self.y0 + self.height) as f64,
        )
    }

    fn is_plastic(&self, y: usize) -> bool {
        (y - self.y0) % self.stripe_period.max(1) < self.stripe_width
    }
}

/// A polyline painted as water `width` pixels wide.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct River {
    pub name: String,
    pub tag: String,
    pub path: Vec<[f64; 2]>,
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub start: YearMonth,
    pub months: usize,
    #[serde(default)]
    pub cover: CoverMix,
    pub cover_cells: usize,
    #[serde(default)]
    pub sites: Vec<PlantedSite>,
    #[serde(default)]
    pub confounders: Vec<Confounder>,
    #[serde(default)]
    pub rivers: Vec<River>,
    pub cloud_fraction: f64,
    pub haze_probability: f64,
    /// Standard deviation of per-band Gaussian noise.
    pub noise: f32,
    /// Relative standard deviation of the static per-pixel background texture.
    pub texture: f32,
    pub seed: u64,
    #[serde(default)]
    pub geo: GeoTransform,
}

impl SceneSpec {
    /// Background-only scene with default land cover, 3% noise and no clouds.
    pub fn new(width: usize, height: usize, start: YearMonth, months: usize, seed: u64) -> Self {
        SceneSpec {
            width,
            height,
            start,
            months,
            cover: CoverMix::default(),
            cover_cells: (width * height / 2048).clamp(4, 96),
            sites: Vec::new(),
            confounders: Vec::new(),
            rivers: Vec::new(),
            cloud_fraction: 0.0,
            haze_probability: 0.0,
            noise: 0.01,
            texture: 0.05,
            seed,
            geo: GeoTransform::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CoreError::SceneSpec(m));
        if self.width == 0 || self.height == 0 || self.months == 0 {
            return bad("width, height and months must be positive".into());
        }
        if !(0.0..1.0).contains(&self.cloud_fraction) {
            return bad(format!("cloud_fraction {} outside [0, 1)", self.cloud_fraction));
        }
        if !(0.0..=1.0).contains(&self.haze_probability) {
            return bad(format!("haze_probability {} outside [0, 1]", self.haze_probability));
        }
        if !(self.noise >= 0.0 && self.texture >= 0.0) {
            return bad("noise and texture must be non-negative".into());
        }
        let (w, h) = (self.width as f64, self.height as f64);
        for s in &self.sites {
            let [x0, y0, x1, y1] = s.polygon.bbox();
            if s.polygon.exterior.len() < 3 || x0 < 0.0 || y0 < 0.0 || x1 > w || y1 > h {
                return bad(format!("site {} polygon lies outside the {}x{} scene", s.id, self.width, self.height));
            }
            if s.signature.iter().any(|v| *v < 0.0 || !v.is_finite()) {
                return bad(format!("site {} signature must be finite and non-negative", s.id));
            }
        }
        for c in &self.confounders {
            if c.x0 + c.width > self.width || c.y0 + c.height > self.height || c.width == 0 || c.height == 0 {
                return bad(format!("confounder {} lies outside the {}x{} scene", c.id, self.width, self.height));
            }
        }
        for r in &self.rivers {
            if r.path.len() < 2 {
                return bad(format!("river {} needs at least two vertices", r.name));
            }
        }
        Ok(())
    }

    pub fn timestamps(&self) -> Vec<YearMonth> {
        (0..self.months as i32).map(|k| self.start.plus(k)).collect()
    }
}

/// Options for [`random_layout`].
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub sites: usize,
    pub confounders: usize,
    pub site_radius: (f64, f64),
    pub margin: f64,
    pub min_separation: f64,
    pub rivers: usize,
}

impl Default for Layout {
    fn default() -> Self {
        Layout {
            sites: 10,
            confounders: 5,
            site_radius: (4.0, 8.0),
            margin: 16.0,
            min_separation: 40.0,
            rivers: 1,
        }
    }
}

/// Scatters always-active waste blobs and greenhouses over `spec`, keeping
/// them `min_separation` apart, and draws random rivers.
pub fn random_layout(spec: &mut SceneSpec, layout: &Layout) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5eed_1a7e);
    let (w, h) = (spec.width as f64, spec.height as f64);
    if w <= 2.0 * layout.margin || h <= 2.0 * layout.margin {
        return Err(CoreError::SceneSpec("scene too small for the requested margin".into()));
    }
    let mut centers: Vec<[f64; 2]> = Vec::new();
    let place = |rng: &mut ChaCha8Rng, centers: &mut Vec<[f64; 2]>| -> Result<[f64; 2]> {
        for _ in 0..10_000 {
            let c = [
                rng.gen_range(layout.margin..w - layout.margin),
                rng.gen_range(layout.margin..h - layout.margin),
            ];
            let sep2 = layout.min_separation * layout.min_separation;
            if centers.iter().all(|p| (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2) >= sep2) {
                centers.push(c);
                return Ok(c);
            }
        }
        Err(CoreError::SceneSpec("could not place features with the requested separation".into()))
    };
    for i in 0..layout.sites {
        let c = place(&mut rng, &mut centers)?;
        let r = rng.gen_range(layout.site_radius.0..=layout.site_radius.1);
        let gain: f32 = rng.gen_range(0.93..1.07);
        spec.sites.push(PlantedSite {
            id: format!("site-{i:03}"),
            polygon: Polygon::random_blob(c, r, 0.3, 12, &mut rng),
            signature: spectra::WASTE.map(|v| v * gain),
            active_from: None,
            active_until: None,
        });
    }
    for i in 0..layout.confounders {
        let c = place(&mut rng, &mut centers)?;
        let (gw, gh) = (rng.gen_range(16..=22usize), rng.gen_range(12..=18usize));
        let x0 = (c[0] - gw as f64 / 2.0).max(0.0) as usize;
        let y0 = (c[1] - gh as f64 / 2.0).max(0.0) as usize;
        spec.confounders.push(Confounder {
            id: format!("greenhouse-{i:03}"),
            x0: x0.min(spec.width - gw),
            y0: y0.min(spec.height - gh),
            width: gw,
            height: gh,
            stripe_period: 3,
            stripe_width: 2,
            plastic_gain: rng.gen_range(0.93..1.07),
        });
    }
    for i in 0..layout.rivers {
        let mut path = Vec::new();
        let mut y = rng.gen_range(0.2 * h..0.8 * h);
        let steps = 8;
        for k in 0..=steps {
            path.push([w * k as f64 / steps as f64, y]);
            y = (y + rng.gen_range(-0.08 * h..0.08 * h)).clamp(0.0, h);
        }
        spec.rivers.push(River {
            name: format!("river-{i}"),
            tag: "river".into(),
            path,
            width: 3.0,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthKind {
    Waste,
    Greenhouse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFeature {
    pub id: String,
    pub kind: TruthKind,
    pub polygon: Polygon,
    pub active_from: Option<YearMonth>,
    pub active_until: Option<YearMonth>,
}

impl TruthFeature {
    pub fn active_at(&self, t: YearMonth) -> bool {
        self.active_from.map_or(true, |a| t >= a) && self.active_until.map_or(true, |b| t <= b)
    }

    /// Active for every month of `window`.
    pub fn active_throughout(&self, window: Window) -> bool {
        (0..window.span as i32).all(|k| self.active_at(window.start.plus(k)))
    }
}

/// Planted features of a generated scene, in pixel coordinates.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GroundTruth {
    pub features: Vec<TruthFeature>,
}

impl GroundTruth {
    pub fn waste(&self) -> impl Iterator<Item = &TruthFeature> {
        self.features.iter().filter(|f| f.kind == TruthKind::Waste)
    }

    pub fn greenhouses(&self) -> impl Iterator<Item = &TruthFeature> {
        self.features.iter().filter(|f| f.kind == TruthKind::Greenhouse)
    }

    pub fn to_geojson(&self, geo: &GeoTransform) -> geojson::FeatureCollection {
        let features = self
            .features
            .iter()
            .map(|f| {
                let mut ring: Vec<Vec<f64>> = f
                    .polygon
                    .exterior
                    .iter()
                    .map(|p| geo.pixel_to_lonlat(p[0], p[1]).to_vec())
                    .collect();
                if let Some(first) = ring.first().cloned() {
                    ring.push(first);
                }
                let mut props = geojson::JsonObject::new();
                props.insert("id".into(), f.id.clone().into());
                props.insert("kind".into(), serde_json::to_value(f.kind).unwrap_or_default());
                props.insert("active_from".into(), serde_json::to_value(f.active_from).unwrap_or_default());
                props.insert("active_until".into(), serde_json::to_value(f.active_until).unwrap_or_default());
                geojson::Feature {
                    bbox: None,
                    geometry: Some(geojson::Geometry::new(geojson::Value::Polygon(vec![ring]))),
                    id: Some(geojson::feature::Id::String(f.id.clone())),
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

    pub fn from_geojson(fc: &geojson::FeatureCollection, geo: &GeoTransform) -> Result<Self> {
        let mut features = Vec::new();
        for f in &fc.features {
            let bad = |m: &str| CoreError::Format(format!("ground-truth feature: {m}"));
            let props = f.properties.as_ref().ok_or_else(|| bad("missing properties"))?;
            let field = |k: &str| props.get(k).cloned().unwrap_or(serde_json::Value::Null);
            let ring = match f.geometry.as_ref().map(|g| &g.value) {
                Some(geojson::Value::Polygon(rings)) if !rings.is_empty() => &rings[0],
                _ => return Err(bad("geometry must be a polygon")),
            };
            let mut exterior: Vec<[f64; 2]> = ring
                .iter()
                .map(|p| geo.lonlat_to_pixel(p[0], p[1]))
                .collect();
            if exterior.len() > 1 && exterior.first() == exterior.last() {
                exterior.pop();
            }
            features.push(TruthFeature {
                id: serde_json::from_value(field("id"))?,
                kind: serde_json::from_value(field("kind"))?,
                polygon: Polygon::new(exterior),
                active_from: serde_json::from_value(field("active_from"))?,
                active_until: serde_json::from_value(field("active_until"))?,
            });
        }
        Ok(GroundTruth { features })
    }
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub frames: Vec<RasterFrame>,
    pub truth: GroundTruth,
}

#[derive(Clone, Copy)]
struct Cell {
    cover: Cover,
    phase: f64,
    gain: f32,
}

/// Per-pixel paint applied on top of the background.
#[derive(Clone, Copy)]
enum Paint {
    None,
    Plastic(usize),
    Soil,
    Site(usize),
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn lerp(a: &Spectrum, b: &Spectrum, s: f64) -> Spectrum {
    std::array::from_fn(|i| (a[i] as f64 + s * (b[i] as f64 - a[i] as f64)) as f32)
}

fn cover_spectrum(cell: &Cell, t: YearMonth) -> Spectrum {
    let month = t.month() as f64 - 1.0;
    let base = match cell.cover {
        Cover::Vegetation => {
            let s = 0.5 + 0.5 * (std::f64::consts::TAU * (month - 1.0 - cell.phase) / 12.0).cos();
            lerp(&spectra::DRY_VEG, &spectra::GREEN_VEG, s)
        }
        Cover::Farmland => {
            let c = (std::f64::consts::TAU * (month - cell.phase) / 12.0).cos();
            lerp(&spectra::BARE, &spectra::GREEN_VEG, (0.5 + 1.5 * c).clamp(0.0, 1.0))
        }
        Cover::Bare => spectra::BARE,
        Cover::Water => spectra::WATER,
        Cover::Urban => spectra::URBAN,
    };
    base.map(|v| v * cell.gain)
}

/// Renders the monthly frame series described by `spec`. Output depends only
/// on the spec: each frame draws from its own seeded stream.
pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let n = w * h;
    let mut rng = rng_for(spec.seed, 0);

    let mix = spec.cover;
    let weights = [
        (Cover::Vegetation, mix.vegetation),
        (Cover::Farmland, mix.farmland),
        (Cover::Bare, mix.bare),
        (Cover::Water, mix.water),
        (Cover::Urban, mix.urban),
    ];
    let total: f64 = weights.iter().map(|(_, v)| v.max(0.0)).sum();
    if total <= 0.0 {
        return Err(CoreError::SceneSpec("cover mix weights sum to zero".into()));
    }
    let cells: Vec<([f64; 2], Cell)> = (0..spec.cover_cells.max(1))
        .map(|_| {
            let p = [rng.gen_range(0.0..w as f64), rng.gen_range(0.0..h as f64)];
            let mut pick = rng.gen_range(0.0..total);
            let mut cover = Cover::Vegetation;
            for (c, v) in weights {
                if pick < v.max(0.0) {
                    cover = c;
                    break;
                }
                pick -= v.max(0.0);
            }
            let phase = match cover {
                Cover::Farmland => rng.gen_range(0.0..12.0),
                _ => rng.gen_range(-1.0..1.0),
            };
            (p, Cell { cover, phase, gain: rng.gen_range(0.9..1.1) })
        })
        .collect();
    let water_cell = cells.len();

    let mut cell_of = vec![0usize; n];
    let mut texture = vec![1.0f32; n];
    for y in 0..h {
        for x in 0..w {
            let q = [x as f64 + 0.5, y as f64 + 0.5];
            let idx = y * w + x;
            cell_of[idx] = cells
                .iter()
                .enumerate()
                .min_by(|a, b| {
                    let da = (a.1 .0[0] - q[0]).powi(2) + (a.1 .0[1] - q[1]).powi(2);
                    let db = (b.1 .0[0] - q[0]).powi(2) + (b.1 .0[1] - q[1]).powi(2);
                    da.total_cmp(&db)
                })
                .map(|(i, _)| i)
                .unwrap_or(0);
            if spec.rivers.iter().any(|r| {
                r.path
                    .windows(2)
                    .any(|s| point_segment_distance(q, s[0], s[1]) <= r.width / 2.0)
            }) {
                cell_of[idx] = water_cell;
            }
            if spec.texture > 0.0 {
                let z: f32 = StandardNormal.sample(&mut rng);
                texture[idx] = (1.0 + spec.texture * z).max(0.5);
            }
        }
    }
    let river_cell = Cell {
        cover: Cover::Water,
        phase: 0.0,
        gain: 1.0,
    };

    let mut paint = vec![Paint::None; n];
    for (i, c) in spec.confounders.iter().enumerate() {
        for y in c.y0..c.y0 + c.height {
            for x in c.x0..c.x0 + c.width {
                paint[y * w + x] = if c.is_plastic(y) { Paint::Plastic(i) } else { Paint::Soil };
            }
        }
    }
    // Sites are painted per frame since they switch on and off; later sites
    // win where polygons overlap.
    let site_pixels: Vec<Vec<usize>> = spec
        .sites
        .iter()
        .map(|s| s.polygon.rasterize(w, h).into_iter().map(|(x, y)| y * w + x).collect())
        .collect();

    let frames: Vec<RasterFrame> = (0..spec.months)
        .into_par_iter()
        .map(|k| {
            let t = spec.start.plus(k as i32);
            let mut rng = rng_for(spec.seed, k as u64 + 1);
            let mut cell_spectra: Vec<Spectrum> = cells.iter().map(|(_, c)| cover_spectrum(c, t)).collect();
            cell_spectra.push(cover_spectrum(&river_cell, t));
            let mut frame_paint = paint.clone();
            for (i, site) in spec.sites.iter().enumerate() {
                if site.active_at(t) {
                    for &idx in &site_pixels[i] {
                        frame_paint[idx] = Paint::Site(i);
                    }
                }
            }
            let mut frame = RasterFrame::new(w, h, t);
            for idx in 0..n {
                let s = match frame_paint[idx] {
                    Paint::None => cell_spectra[cell_of[idx]].map(|v| v * texture[idx]),
                    Paint::Plastic(i) => spectra::WASTE.map(|v| v * spec.confounders[i].plastic_gain),
                    Paint::Soil => spectra::BARE,
                    Paint::Site(i) => spec.sites[i].signature,
                };
                for b in 0..BAND_COUNT {
                    frame.data[b * n + idx] = s[b];
                }
            }
            apply_haze(&mut frame, spec, &mut rng);
            apply_clouds(&mut frame, spec.cloud_fraction, &mut rng);
            if spec.noise > 0.0 {
                for v in frame.data.iter_mut() {
                    let z: f32 = StandardNormal.sample(&mut rng);
                    *v = (*v + spec.noise * z).max(0.0);
                }
            }
            frame
        })
        .collect();

    let mut truth = GroundTruth::default();
    for s in &spec.sites {
        truth.features.push(TruthFeature {
            id: s.id.clone(),
            kind: TruthKind::Waste,
            polygon: s.polygon.clone(),
            active_from: s.active_from,
            active_until: s.active_until,
        });
    }
    for c in &spec.confounders {
        truth.features.push(TruthFeature {
            id: c.id.clone(),
            kind: TruthKind::Greenhouse,
            polygon: c.polygon(),
            active_from: None,
            active_until: None,
        });
    }
    Ok(Scene { frames, truth })
}

/// With probability `haze_probability`, brightens a soft disk of the frame
/// without masking it.
fn apply_haze(frame: &mut RasterFrame, spec: &SceneSpec, rng: &mut ChaCha8Rng) {
    if spec.haze_probability <= 0.0 || !rng.gen_bool(spec.haze_probability) {
        return;
    }
    let (w, h) = (frame.width, frame.height);
    let n = w * h;
    let c = [rng.gen_range(0.0..w as f64), rng.gen_range(0.0..h as f64)];
    let r = (w.min(h) as f64 / 4.0).max(2.0);
    let delta = rng.gen_range(0.05..0.15);
    for y in 0..h {
        for x in 0..w {
            let d = ((x as f64 + 0.5 - c[0]).powi(2) + (y as f64 + 0.5 - c[1]).powi(2)).sqrt();
            if d < r {
                let add = (delta * (1.0 - d / r)) as f32;
                for b in 0..BAND_COUNT {
                    frame.data[b * n + y * w + x] += add;
                }
            }
        }
    }
}

/// Masks random disks until `fraction` of the frame is covered; masked pixels
/// read as bright cloud.
fn apply_clouds(frame: &mut RasterFrame, fraction: f64, rng: &mut ChaCha8Rng) {
    if fraction <= 0.0 {
        return;
    }
    let (w, h) = (frame.width, frame.height);
    let n = w * h;
    let target = (fraction * n as f64).round() as usize;
    let r_max = (w.min(h) as f64 / 12.0).max(2.0);
    let mut masked = 0usize;
    while masked < target {
        let c = [rng.gen_range(0.0..w as f64), rng.gen_range(0.0..h as f64)];
        let r = rng.gen_range(1.0..r_max);
        let (xa, xb) = ((c[0] - r).floor().max(0.0) as usize, ((c[0] + r).ceil() as usize).min(w));
        let (ya, yb) = ((c[1] - r).floor().max(0.0) as usize, ((c[1] + r).ceil() as usize).min(h));
        'disk: for y in ya..yb {
            for x in xa..xb {
                let idx = y * w + x;
                if frame.mask[idx] {
                    continue;
                }
                if (x as f64 + 0.5 - c[0]).powi(2) + (y as f64 + 0.5 - c[1]).powi(2) <= r * r {
                    frame.mask[idx] = true;
                    masked += 1;
                    for b in 0..BAND_COUNT {
                        frame.data[b * n + idx] = spectra::CLOUD[b];
                    }
                    if masked >= target {
                        break 'disk;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataengine::ndvi_of;

    fn start() -> YearMonth {
        YearMonth::new(2019, 1).unwrap()
    }

    #[test]
    fn noiseless_site_matches_signature() {
        let mut spec = SceneSpec::new(48, 48, start(), 3, 1);
        spec.noise = 0.0;
        spec.sites.push(PlantedSite {
            id: "a".into(),
            polygon: Polygon::rectangle(10.0, 10.0, 20.0, 18.0),
            signature: spectra::WASTE,
            active_from: None,
            active_until: None,
        });
        let scene = generate_scene(&spec).unwrap();
        for f in &scene.frames {
            for y in 10..18 {
                for x in 10..20 {
                    assert_eq!(f.spectrum(y * 48 + x), spectra::WASTE);
                }
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let mut spec = SceneSpec::new(64, 64, start(), 4, 9);
        spec.cloud_fraction = 0.2;
        spec.haze_probability = 0.5;
        random_layout(
            &mut spec,
            &Layout {
                sites: 2,
                confounders: 1,
                min_separation: 20.0,
                ..Layout::default()
            },
        )
        .unwrap();
        let a = generate_scene(&spec).unwrap();
        let b = generate_scene(&spec).unwrap();
        assert_eq!(a.frames, b.frames);
        assert_eq!(a.truth, b.truth);
        spec.seed = 10;
        assert_ne!(generate_scene(&spec).unwrap().frames, a.frames);
    }

    #[test]
    fn cloud_fraction_is_met_per_frame() {
        let mut spec = SceneSpec::new(96, 96, start(), 10, 3);
        spec.cloud_fraction = 0.3;
        let scene = generate_scene(&spec).unwrap();
        for f in &scene.frames {
            assert!((f.masked_fraction() - 0.3).abs() <= 0.05, "{}", f.masked_fraction());
        }
    }

    #[test]
    fn polygon_outside_bounds_is_rejected() {
        let mut spec = SceneSpec::new(32, 32, start(), 1, 0);
        spec.sites.push(PlantedSite {
            id: "x".into(),
            polygon: Polygon::rectangle(25.0, 25.0, 40.0, 30.0),
            signature: spectra::WASTE,
            active_from: None,
            active_until: None,
        });
        assert!(matches!(generate_scene(&spec), Err(CoreError::SceneSpec(_))));
    }

    #[test]
    fn vegetation_cycles_seasonally() {
        let mut spec = SceneSpec::new(16, 16, start(), 12, 5);
        spec.cover = CoverMix {
            vegetation: 1.0,
            farmland: 0.0,
            bare: 0.0,
            water: 0.0,
            urban: 0.0,
        };
        spec.noise = 0.0;
        spec.texture = 0.0;
        let scene = generate_scene(&spec).unwrap();
        let series: Vec<f32> = scene.frames.iter().map(|f| ndvi_of(&f.spectrum(0))).collect();
        let (lo, hi) = series.iter().fold((f32::MAX, f32::MIN), |(a, b), v| (a.min(*v), b.max(*v)));
        assert!(hi - lo > 0.2, "{series:?}");
    }

    #[test]
    fn waste_is_not_vegetated() {
        assert!(ndvi_of(&spectra::WASTE) < 0.1);
        assert!(ndvi_of(&spectra::GREEN_VEG) > 0.4);
    }

    #[test]
    fn truth_geojson_round_trip() {
        let mut spec = SceneSpec::new(128, 128, start(), 1, 2);
        random_layout(
            &mut spec,
            &Layout {
                sites: 3,
                confounders: 1,
                min_separation: 20.0,
                ..Layout::default()
            },
        )
        .unwrap();
        spec.sites[0].active_until = Some(start().plus(4));
        let scene = generate_scene(&spec).unwrap();
        let fc = scene.truth.to_geojson(&spec.geo);
        let text = serde_json::to_string(&fc).unwrap();
        let parsed: geojson::FeatureCollection = text.parse::<geojson::GeoJson>().unwrap().try_into().unwrap();
        let back = GroundTruth::from_geojson(&parsed, &spec.geo).unwrap();
        assert_eq!(back.features.len(), 4);
        for (a, b) in back.features.iter().zip(&scene.truth.features) {
            assert_eq!((a.id.as_str(), a.kind, a.active_until), (b.id.as_str(), b.kind, b.active_until));
            for (p, q) in a.polygon.exterior.iter().zip(&b.polygon.exterior) {
                assert!((p[0] - q[0]).abs() < 1e-6 && (p[1] - q[1]).abs() < 1e-6);
            }
        }
    }
}
