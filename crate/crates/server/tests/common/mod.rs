#![allow(dead_code)]

use wastemap_core::detect::{candidate_id, CandidateSite, ModeName, SiteStatus};
use wastemap_core::geo::YearMonth;

pub const SHIPPED: &str = include_str!("../../../../config/wastemap.toml");

/// The shipped config shrunk to a 96×96 scene and one-epoch training.
pub fn tiny_config_text() -> String {
    let mut v: toml::Value = SHIPPED.parse().unwrap();
    let set = |v: &mut toml::Value, path: &str, x: toml::Value| {
        let (sec, key) = path.split_once('.').unwrap();
        v[sec].as_table_mut().unwrap().insert(key.into(), x);
    };
    use toml::Value::{Array, Float, Integer};
    set(&mut v, "scene.width", Integer(96));
    set(&mut v, "scene.height", Integer(96));
    set(&mut v, "scene.months", Integer(12));
    set(&mut v, "scene.sites", Integer(2));
    set(&mut v, "scene.confounders", Integer(1));
    set(&mut v, "scene.min_separation", Float(30.0));
    set(&mut v, "dataengine.positives_per_site", Integer(3));
    set(&mut v, "dataengine.background_negatives", Integer(8));
    set(&mut v, "dataengine.per_confounder", Integer(2));
    set(&mut v, "dataengine.negatives_per_patch", Integer(16));
    set(&mut v, "dataengine.unlabeled", Integer(8));
    set(&mut v, "pixel.epochs", Integer(2));
    set(&mut v, "teachers.filters", Array(vec![Integer(2), Integer(2), Integer(2)]));
    set(&mut v, "teachers.dense", Array(vec![Integer(4), Integer(4)]));
    set(&mut v, "teachers.epochs", Integer(1));
    set(&mut v, "student.epochs", Integer(1));
    set(&mut v, "detect.timesteps", Integer(2));
    set(&mut v, "detect.tile", Integer(40));
    set(&mut v, "monitor.region_half", Integer(10));
    toml::to_string(&v).unwrap()
}

pub fn site(lon: f64, lat: f64, mode: ModeName) -> CandidateSite {
    let first_month: YearMonth = "2020-01".parse().unwrap();
    CandidateSite {
        id: candidate_id([lon, lat], first_month),
        center_px: [10, 10],
        center: [lon, lat],
        blob_sigma: 3.5,
        pixel_score: 0.8,
        patch_score: Some(0.7),
        mode,
        status: SiteStatus::Candidate,
        first_month,
    }
}

/// Five candidates spread along a line of longitudes 115.0..115.4.
pub fn five_sites() -> Vec<CandidateSite> {
    (0..5)
        .map(|i| {
            let mode = if i % 2 == 0 { ModeName::High } else { ModeName::Med };
            site(115.0 + 0.1 * i as f64, -8.5, mode)
        })
        .collect()
}
