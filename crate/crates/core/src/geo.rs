//! Calendar months, pixel/geographic transforms and pixel-space polygons.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{CoreError, Result};

/// A calendar month, serialized as `"YYYY-MM"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct YearMonth {
    year: i32,
    month: u8,
}

impl YearMonth {
    pub fn new(year: i32, month: u8) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(CoreError::InvalidInput(format!("month {month} outside 1..=12")));
        }
        Ok(YearMonth { year, month })
    }

    pub fn year(self) -> i32 {
        self.year
    }

    pub fn month(self) -> u8 {
        self.month
    }

    /// Months since year 0; consecutive months differ by one.
    pub fn index(self) -> i32 {
        self.year * 12 + self.month as i32 - 1
    }

    pub fn from_index(index: i32) -> Self {
        YearMonth {
            year: index.div_euclid(12),
            month: (index.rem_euclid(12) + 1) as u8,
        }
    }

    pub fn plus(self, months: i32) -> Self {
        Self::from_index(self.index() + months)
    }

    pub fn months_since(self, earlier: YearMonth) -> i32 {
        self.index() - earlier.index()
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || CoreError::InvalidInput(format!("expected YYYY-MM, got {s:?}"));
        let (y, m) = s.split_once('-').ok_or_else(bad)?;
        YearMonth::new(y.parse().map_err(|_| bad())?, m.parse().map_err(|_| bad())?)
    }
}

impl Serialize for YearMonth {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for YearMonth {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A compositing window of `span` consecutive months starting at `start`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Window {
    pub start: YearMonth,
    pub span: u32,
}

impl Window {
    pub const COMPOSITE_SPAN: u32 = 3;

    /// The standard three-month compositing window.
    pub fn quarter(start: YearMonth) -> Self {
        Window {
            start,
            span: Self::COMPOSITE_SPAN,
        }
    }

    pub fn contains(&self, t: YearMonth) -> bool {
        let d = t.months_since(self.start);
        d >= 0 && d < self.span as i32
    }

    pub fn end(&self) -> YearMonth {
        self.start.plus(self.span as i32 - 1)
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end())
    }
}

const METERS_PER_DEGREE: f64 = 111_320.0;

/// Maps pixel coordinates (x right, y down) to longitude/latitude with a local
/// equirectangular approximation around the raster origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoTransform {
    pub origin_lon: f64,
    pub origin_lat: f64,
    pub pixel_size_m: f64,
}

impl Default for GeoTransform {
    fn default() -> Self {
        GeoTransform {
            origin_lon: 115.2,
            origin_lat: -8.6,
            pixel_size_m: 10.0,
        }
    }
}

impl GeoTransform {
    fn meters_per_degree_lon(&self) -> f64 {
        METERS_PER_DEGREE * self.origin_lat.to_radians().cos()
    }

    pub fn pixel_to_lonlat(&self, x: f64, y: f64) -> [f64; 2] {
        [
            self.origin_lon + x * self.pixel_size_m / self.meters_per_degree_lon(),
            self.origin_lat - y * self.pixel_size_m / METERS_PER_DEGREE,
        ]
    }

    pub fn lonlat_to_pixel(&self, lon: f64, lat: f64) -> [f64; 2] {
        [
            (lon - self.origin_lon) * self.meters_per_degree_lon() / self.pixel_size_m,
            (self.origin_lat - lat) * METERS_PER_DEGREE / self.pixel_size_m,
        ]
    }

    /// Pixel coordinates to planar meters relative to the origin.
    pub fn pixel_to_meters(&self, x: f64, y: f64) -> [f64; 2] {
        [x * self.pixel_size_m, y * self.pixel_size_m]
    }

    /// Hectares covered by one pixel.
    pub fn pixel_hectares(&self) -> f64 {
        self.pixel_size_m * self.pixel_size_m / 10_000.0
    }
}

/// A simple polygon in pixel coordinates; the ring is implicitly closed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub exterior: Vec<[f64; 2]>,
}

impl Polygon {
    pub fn new(exterior: Vec<[f64; 2]>) -> Self {
        Polygon { exterior }
    }

    pub fn rectangle(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Polygon::new(vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
    }

    /// Star-shaped blob with `vertices` points whose radii vary by up to
    /// `irregularity` (a fraction of `radius`).
    pub fn random_blob<R: Rng>(center: [f64; 2], radius: f64, irregularity: f64, vertices: usize, rng: &mut R) -> Self {
        let n = vertices.max(3);
        let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let exterior = (0..n)
            .map(|i| {
                let a = phase + std::f64::consts::TAU * i as f64 / n as f64;
                let r = radius * (1.0 + irregularity * rng.gen_range(-1.0..1.0));
                [center[0] + r * a.cos(), center[1] + r * a.sin()]
            })
            .collect();
        Polygon { exterior }
    }

    /// Even-odd point containment.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        let pts = &self.exterior;
        let mut inside = false;
        let mut j = pts.len().wrapping_sub(1);
        for i in 0..pts.len() {
            let (a, b) = (pts[i], pts[j]);
            if (a[1] > p[1]) != (b[1] > p[1]) {
                let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
                if p[0] < x {
                    inside = !inside;
                }
            }
            j = i;
        }
        inside
    }

    pub fn bbox(&self) -> [f64; 4] {
        self.exterior.iter().fold(
            [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY],
            |b, p| [b[0].min(p[0]), b[1].min(p[1]), b[2].max(p[0]), b[3].max(p[1])],
        )
    }

    pub fn centroid(&self) -> [f64; 2] {
        let n = self.exterior.len().max(1) as f64;
        let s = self.exterior.iter().fold([0.0, 0.0], |s, p| [s[0] + p[0], s[1] + p[1]]);
        [s[0] / n, s[1] / n]
    }

    /// Shoelace area (absolute) in square pixels.
    pub fn area(&self) -> f64 {
        let pts = &self.exterior;
        let mut acc = 0.0;
        for i in 0..pts.len() {
            let (a, b) = (pts[i], pts[(i + 1) % pts.len()]);
            acc += a[0] * b[1] - b[0] * a[1];
        }
        acc.abs() / 2.0
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        Polygon {
            exterior: self.exterior.iter().map(|p| [p[0] + dx, p[1] + dy]).collect(),
        }
    }

    /// Pixels `(x, y)` of a `width × height` grid whose centers fall inside.
    pub fn rasterize(&self, width: usize, height: usize) -> Vec<(usize, usize)> {
        let [x0, y0, x1, y1] = self.bbox();
        if !x0.is_finite() {
            return Vec::new();
        }
        let xa = x0.floor().max(0.0) as usize;
        let ya = y0.floor().max(0.0) as usize;
        let xb = (x1.ceil().max(0.0) as usize).min(width);
        let yb = (y1.ceil().max(0.0) as usize).min(height);
        let mut out = Vec::new();
        for y in ya..yb {
            for x in xa..xb {
                if self.contains([x as f64 + 0.5, y as f64 + 0.5]) {
                    out.push((x, y));
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn year_month_arithmetic_and_text() {
        let t = YearMonth::new(2019, 11).unwrap();
        assert_eq!(t.plus(3).to_string(), "2020-02");
        assert_eq!(t.plus(-11).to_string(), "2018-12");
        assert_eq!(t.plus(6).months_since(t), 6);
        assert_eq!("2020-02".parse::<YearMonth>().unwrap(), t.plus(3));
        assert!("2020-13".parse::<YearMonth>().is_err());
        assert_eq!(serde_json::to_string(&t).unwrap(), "\"2019-11\"");
    }

    #[test]
    fn window_membership() {
        let w = Window::quarter(YearMonth::new(2019, 12).unwrap());
        assert!(w.contains(YearMonth::new(2020, 2).unwrap()));
        assert!(!w.contains(YearMonth::new(2020, 3).unwrap()));
        assert!(!w.contains(YearMonth::new(2019, 11).unwrap()));
        assert_eq!(w.to_string(), "2019-12..2020-02");
    }

    #[test]
    fn geotransform_round_trip() {
        let g = GeoTransform::default();
        let [lon, lat] = g.pixel_to_lonlat(123.5, 77.25);
        let [x, y] = g.lonlat_to_pixel(lon, lat);
        assert!((x - 123.5).abs() < 1e-6 && (y - 77.25).abs() < 1e-6);
        assert!((g.pixel_hectares() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn rectangle_rasterizes_to_its_area() {
        let r = Polygon::rectangle(2.0, 3.0, 7.0, 5.0);
        assert_eq!(r.rasterize(20, 20).len(), 10);
        assert_eq!(r.area(), 10.0);
        assert!(r.contains([2.5, 3.5]));
        assert!(!r.contains([7.5, 3.5]));
        // clipped by the grid
        assert_eq!(r.rasterize(4, 20).len(), 4);
    }
}
