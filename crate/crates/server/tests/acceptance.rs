//! End-to-end acceptance checks, one line per criterion.
//!
//! Runs as a plain binary: `cargo test --test acceptance` runs everything,
//! `cargo test --test acceptance -- 3 5` only the listed criteria.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{ensure, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wastemap_core::dataengine::synth::{generate_scene, random_layout, spectra, Layout, PlantedSite, SceneSpec};
use wastemap_core::dataengine::{
    build_spectrogram_field, min_composite, sample_labeled_patches, CompositePair, NormStats, PatchSampling, PatchTensor,
};
use wastemap_core::detect::{
    detect_blobs, infer_heatmap, infer_heatmap_tiled, Heatmap, ModeName, PatchScoreGrid, SensitivityMode, GRID_STRIDE,
};
use wastemap_core::distill::{bayes_fuse, fuse_ensemble, ModelStats, VoteVector};
use wastemap_core::geo::{Polygon, Window, YearMonth};
use wastemap_core::models::{
    make_patch_classifier, make_pixel_classifier, spectrogram_batch, ModelBundle, PatchArch, PixelClassifier, ENSEMBLE_SIZE,
    PIXEL_INPUT_SHAPE,
};
use wastemap_core::monitor::{
    distance_to_waterway, extract_contours, mask_contours, monitor_site, point_segment_distance, rolling_mask, Region,
    WaterwayFeature, WaterwayKind, WaterwaySet, FOOTPRINT_THRESHOLD,
};
use wastemap_core::raster::{RasterFrame, BAND_COUNT};
use wastemap_nn::{gradient_check_report, GradCheckOptions, Tensor};
use wastemap_server::config::Config;
use wastemap_server::workflow::{
    compare_student, detect_step, distill_step, evaluate_sites, latest_windows, prepare_training_data, scene_spec, train_pixel_step,
    train_svm_step, train_teachers_step, write_scene, LoadedScene,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Result<Outcome> {
    Ok(Outcome { pass, detail: detail.into() })
}

fn config_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../config/wastemap.toml")
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Shared state of the end-to-end run, reused by the later criteria.
#[derive(Default)]
struct Trained {
    dir: Option<tempfile::TempDir>,
    test_scene: Option<LoadedScene>,
}

impl Trained {
    fn bundle(&self) -> Option<ModelBundle> {
        self.dir.as_ref().and_then(|d| ModelBundle::open(d.path().join("models")).ok())
    }
}

fn random_tensor(shape: &[usize], r: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Nudges batch-norm scales and shifts off their 1/0 initial values.
fn perturb_norm_params(net: &mut wastemap_nn::Network, r: &mut ChaCha8Rng) {
    for p in net.params_mut() {
        if p.shape().len() == 1 {
            for v in p.data_mut() {
                *v += r.gen_range(-0.2..0.2);
            }
        }
    }
}

fn c1_gradients() -> Result<Outcome> {
    let t0 = Instant::now();
    let mut r = rng(1);
    let opts = GradCheckOptions {
        samples_per_tensor: 3,
        seed: 1,
        ..GradCheckOptions::default()
    };
    let mut pixel = make_pixel_classifier(3)?.net;
    perturb_norm_params(&mut pixel, &mut r);
    let mut shape = vec![6];
    shape.extend(PIXEL_INPUT_SHAPE);
    let targets = Tensor::from_vec(&[6, 1], (0..6).map(|i| (i % 2) as f32).collect())?;
    let pixel_rep = gradient_check_report(&pixel, &random_tensor(&shape, &mut r), &targets, &opts)?;

    let mut patch = make_patch_classifier(&PatchArch::default(), 4)?.net;
    perturb_norm_params(&mut patch, &mut r);
    let mut shape = vec![2];
    shape.extend(PatchTensor::SHAPE);
    let targets = Tensor::from_vec(&[2, 1], vec![1.0, 0.0])?;
    let patch_rep = gradient_check_report(&patch, &random_tensor(&shape, &mut r), &targets, &opts)?;

    let kinds: BTreeSet<String> = pixel
        .specs()
        .into_iter()
        .chain(patch.specs())
        .map(|s| s.describe().split(['(', ' ']).next().unwrap_or_default().to_string())
        .collect();
    let elapsed = t0.elapsed();
    let worst = pixel_rep.max_rel_error.max(patch_rep.max_rel_error);
    outcome(
        worst < 1e-4 && elapsed < Duration::from_secs(10),
        format!(
            "max rel err pixel {:.2e} ({} weights), patch {:.2e} ({} weights, {} kink crossings redrawn); layer kinds {kinds:?}; {:.1}s",
            pixel_rep.max_rel_error,
            pixel_rep.checked,
            patch_rep.max_rel_error,
            patch_rep.checked,
            patch_rep.kinks_skipped,
            elapsed.as_secs_f64()
        ),
    )
}

fn c2_shapes() -> Result<Outcome> {
    let cfg = Config::load(&config_path())?;
    let mut ok = true;
    let mut notes = Vec::new();

    let pixel = make_pixel_classifier(0)?;
    ok &= pixel.net.input_shape() == [2, BAND_COUNT, 1] && BAND_COUNT == 12;
    let good = Tensor::zeros(&[1, 2, 12, 1]);
    ok &= pixel.score_rows(&good).map(|s| s.len() == 1).unwrap_or(false);
    ok &= pixel.score_rows(&Tensor::zeros(&[1, 3, 12, 1])).is_err();
    ok &= spectrogram_batch(&[]).shape()[1..] == [2, 12, 1];

    let patch = make_patch_classifier(&cfg.teachers.arch(), 0)?;
    ok &= patch.net.input_shape() == [28, 28, 24] && PatchTensor::SHAPE == [28, 28, 24];
    ok &= patch.score(&Tensor::zeros(&[1, 28, 28, 24])).map(|s| s.len() == 1).unwrap_or(false);
    ok &= patch.score(&Tensor::zeros(&[1, 28, 28, 12])).is_err();

    ok &= GRID_STRIDE == 8;
    let (cols, rows) = PatchScoreGrid::dims_for(28 + 8 * 5, 28 + 8 * 2)?;
    ok &= (cols, rows) == (6, 3);
    notes.push(format!("stride {GRID_STRIDE}, grid 68x44 -> {cols}x{rows}"));

    let expected = [
        (ModeName::Low, 0.9f32, 5.0f64, 0.6f32),
        (ModeName::Med, 0.6, 5.0, 0.6),
        (ModeName::High, 0.6, 3.5, 0.3),
    ];
    for (name, px, sigma, patch_t) in expected {
        let m: SensitivityMode = cfg.detect.modes.get(name);
        let matches = m.name == name && m.pixel_threshold == px && m.min_sigma == sigma && m.patch_threshold == patch_t;
        ok &= matches;
        notes.push(format!("{name} ({}, {}, {})", m.pixel_threshold, m.min_sigma, m.patch_threshold));
    }
    outcome(ok, notes.join("; "))
}

fn c3_composite() -> Result<Outcome> {
    let mut r = rng(3);
    let start = YearMonth::new(2020, 1)?;
    let mut mismatches = 0;
    for _ in 0..200 {
        let (w, h, t) = (r.gen_range(1..8), r.gen_range(1..8), r.gen_range(1..6));
        let n = w * h;
        let frames: Vec<RasterFrame> = (0..t)
            .map(|k| RasterFrame {
                width: w,
                height: h,
                data: (0..BAND_COUNT * n).map(|_| r.gen_range(0.0..1.0)).collect(),
                mask: (0..n).map(|_| r.gen_bool(0.4)).collect(),
                timestamp: start.plus(k as i32 % 3),
            })
            .collect();
        let c = min_composite(&frames, Window::quarter(start))?;
        for idx in 0..n {
            let clear: Vec<&RasterFrame> = frames.iter().filter(|f| !f.mask[idx]).collect();
            if c.validity[idx] == clear.is_empty() {
                mismatches += 1;
            }
            for b in 0..BAND_COUNT {
                let mut expected: Option<f32> = None;
                for f in &clear {
                    let v = f.data[b * n + idx];
                    expected = Some(match expected {
                        Some(m) if m <= v => m,
                        _ => v,
                    });
                }
                if c.data[b * n + idx] != expected.unwrap_or(0.0) {
                    mismatches += 1;
                }
            }
        }
    }
    outcome(mismatches == 0, format!("200 random stacks, {mismatches} mismatching values"))
}

fn permutations<T: Clone>(items: &[T]) -> Vec<Vec<T>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut p in permutations(&rest) {
            p.insert(0, head.clone());
            out.push(p);
        }
    }
    out
}

fn c4_fusion() -> Result<Outcome> {
    let vv = |pos: usize| -> VoteVector { std::array::from_fn(|i| if i < pos { 1.0 } else { 0.0 }) };
    let all = fuse_ensemble(&vv(32));
    let three_quarters = fuse_ensemble(&vv(24));
    let half = fuse_ensemble(&vv(16));
    let mut ok = all == 1.0 && (three_quarters - 0.1340).abs() <= 1e-4 && half == 0.0;

    let mut r = rng(4);
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let prior = r.gen_range(0.0..=1.0);
        let k = r.gen_range(0..=4);
        let votes: Vec<(bool, ModelStats)> = (0..k)
            .map(|_| (r.gen_bool(0.5), ModelStats::new(r.gen_range(0.0..=1.0), r.gen_range(0.0..=1.0)).unwrap()))
            .collect();
        let reference = bayes_fuse(prior, &votes);
        for p in permutations(&votes) {
            worst = worst.max((bayes_fuse(prior, &p) - reference).abs());
        }
    }
    ok &= worst <= 1e-12;
    let s = ModelStats::new(0.9, 0.1)?;
    let example = bayes_fuse(0.8, &[(true, s)]);
    ok &= (example - 36.0 / 37.0).abs() < 1e-6;
    outcome(
        ok,
        format!(
            "32/32 {all}, 24/32 {three_quarters:.4}, 16/32 {half}; permutation spread {worst:.1e}; 0.8 prior + 9x vote {example:.4}"
        ),
    )
}

/// 4-connected components of `score ≥ threshold`, as centroids.
fn component_centroids(h: &Heatmap, threshold: f32) -> Vec<[f64; 2]> {
    let w = h.width;
    let mut seen = vec![false; h.scores.len()];
    let mut out = Vec::new();
    for start in 0..h.scores.len() {
        if seen[start] || h.scores[start] < threshold {
            continue;
        }
        seen[start] = true;
        let mut stack = vec![start];
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0.0);
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            sx += x as f64;
            sy += y as f64;
            n += 1.0;
            let mut nb = Vec::with_capacity(4);
            if x > 0 {
                nb.push(i - 1);
            }
            if x + 1 < w {
                nb.push(i + 1);
            }
            if y > 0 {
                nb.push(i - w);
            }
            if y + 1 < h.height {
                nb.push(i + w);
            }
            for j in nb {
                if !seen[j] && h.scores[j] >= threshold {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        out.push([sx / n, sy / n]);
    }
    out
}

fn c5_blobs() -> Result<Outcome> {
    let cfg = Config::load(&config_path())?;
    let mode = cfg.detect.modes.get(ModeName::High);
    let mut r = rng(5);
    let (w, h) = (128usize, 128usize);
    let mut good = 0;
    let mut failures = Vec::new();
    for case in 0..100 {
        let k = r.gen_range(0..=5usize);
        // one bump per 32 px cell of a 4x4 grid keeps them well apart
        let mut cells: Vec<usize> = (0..16).collect();
        let mut bumps = Vec::new();
        for _ in 0..k {
            let cell = cells.remove(r.gen_range(0..cells.len()));
            let c = [
                16.0 + 32.0 * (cell % 4) as f64 + r.gen_range(-4.0..4.0),
                16.0 + 32.0 * (cell / 4) as f64 + r.gen_range(-4.0..4.0),
            ];
            bumps.push((c, r.gen_range(4.0..6.0), r.gen_range(0.8f32..1.0)));
        }
        let mut scores = vec![0.0f32; w * h];
        for y in 0..h {
            for x in 0..w {
                for (c, sigma, peak) in &bumps {
                    let d2 = (x as f64 - c[0]).powi(2) + (y as f64 - c[1]).powi(2);
                    scores[y * w + x] += peak * (-d2 / (2.0 * sigma * sigma)).exp() as f32;
                }
            }
        }
        let heat = Heatmap::from_scores(w, h, scores)?;
        let comps = component_centroids(&heat, mode.pixel_threshold);
        let blobs = detect_blobs(&heat, &mode);
        let centered = comps
            .iter()
            .all(|c| blobs.iter().any(|b| (b.x as f64 - c[0]).abs() <= 2.0 && (b.y as f64 - c[1]).abs() <= 2.0));
        if blobs.len() == comps.len() && comps.len() == k && centered {
            good += 1;
        } else {
            failures.push(format!("case {case}: k {k}, components {}, blobs {}", comps.len(), blobs.len()));
        }
    }
    let mut detail = format!("{good}/100 heatmaps match the component oracle within 2 px");
    if !failures.is_empty() {
        detail.push_str(&format!(" ({})", failures.join(", ")));
    }
    outcome(good >= 98, detail)
}

/// 8-connected component sizes of a mask, sorted.
fn component_sizes(mask: &[bool], w: usize, h: usize) -> Vec<usize> {
    let mut seen = vec![false; w * h];
    let mut sizes = Vec::new();
    for s in 0..w * h {
        if !mask[s] || seen[s] {
            continue;
        }
        seen[s] = true;
        let mut stack = vec![s];
        let mut n = 0;
        while let Some(i) = stack.pop() {
            n += 1;
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if mask[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        sizes.push(n);
    }
    sizes.sort_unstable();
    sizes
}

fn c6_contours() -> Result<Outcome> {
    let mut r = rng(6);
    let mut bad = 0;
    for _ in 0..1000 {
        let density = r.gen_range(0.05..0.95);
        let mask: Vec<bool> = (0..32 * 32).map(|_| r.gen_bool(density)).collect();
        let contours = mask_contours(&mask, 32, 32);
        let mut areas: Vec<usize> = Vec::with_capacity(contours.len());
        let mut exact = true;
        for c in &contours {
            exact &= c.area_px() == c.pixel_count as f64;
            areas.push(c.pixel_count);
        }
        areas.sort_unstable();
        if !exact || areas != component_sizes(&mask, 32, 32) {
            bad += 1;
        }
    }
    outcome(bad == 0, format!("1000 random 32x32 masks, {bad} with polygon area != component pixel count"))
}

fn c7_end_to_end(trained: &mut Trained) -> Result<Outcome> {
    let t0 = Instant::now();
    let cfg = Config::load(&config_path())?;
    let dir = tempfile::tempdir()?;
    let mut scenes = Vec::new();
    for seed in [11u64, 12] {
        scenes.push(write_scene(&scene_spec(&cfg.scene, seed)?, &dir.path().join(format!("train-{seed}")))?);
    }
    let test_spec = scene_spec(&cfg.scene, 13)?;
    let test = write_scene(&test_spec, &dir.path().join("test"))?;
    let data = prepare_training_data(&cfg, &scenes, &[], 7)?;
    let bundle = ModelBundle::open(dir.path().join("models"))?;
    let pixel = train_pixel_step(&cfg, &data, 7, &bundle, "acceptance")?;
    train_svm_step(&cfg, &data, &bundle, "acceptance")?;
    train_teachers_step(&cfg, &data, 7, &bundle, "acceptance")?;
    distill_step(&cfg, &data, 7, &bundle, "acceptance")?;
    let out = detect_step(&cfg, &test, &bundle, ModeName::High, None)?;
    let ev = evaluate_sites(&out, &test.truth);
    let elapsed = t0.elapsed();

    let rejection = if ev.greenhouses_flagged == 0 {
        0.0
    } else {
        ev.greenhouses_rejected as f64 / ev.greenhouses_flagged as f64
    };
    let scene_ok = (test_spec.width, test_spec.height, test_spec.sites.len(), test_spec.confounders.len()) == (512, 512, 10, 5);
    let pass = scene_ok
        && pixel.positives >= 1500
        && pixel.negatives >= 3000
        && ev.recall >= 0.9
        && ev.greenhouses_flagged > 0
        && rejection >= 0.8
        && elapsed < Duration::from_secs(30 * 60);
    trained.dir = Some(dir);
    trained.test_scene = Some(test);
    outcome(
        pass,
        format!(
            "pixel samples {}+/{}-; recall {:.2} ({}/{}); greenhouses flagged {} rejected {} ({:.0}%); {} accepted, {} false; {:.1} min",
            pixel.positives,
            pixel.negatives,
            ev.recall,
            ev.detected,
            ev.sites,
            ev.greenhouses_flagged,
            ev.greenhouses_rejected,
            100.0 * rejection,
            ev.accepted,
            ev.false_positives,
            elapsed.as_secs_f64() / 60.0
        ),
    )
}

fn c8_distillation(trained: &Trained) -> Result<Outcome> {
    let (Some(bundle), Some(test)) = (trained.bundle(), trained.test_scene.as_ref()) else {
        return outcome(false, "needs the models trained by criterion 7");
    };
    let cfg = Config::load(&config_path())?;
    let t = latest_windows(&test.frames, 1)?[0];
    let pair = CompositePair::from_frames(&test.frames, t)?;
    let sampling = PatchSampling {
        positives_per_site: cfg.dataengine.positives_per_site,
        jitter: cfg.dataengine.jitter,
        negatives: cfg.dataengine.background_negatives,
        per_confounder: cfg.dataengine.per_confounder,
        seed: 99,
    };
    let patches = sample_labeled_patches(&pair, &test.truth, &sampling)?;
    let teachers = bundle.load_teachers()?;
    let cmp = compare_student(&patches, &bundle.load_stats()?, &teachers, &bundle.load_student()?)?;
    let (tf, sf) = (100.0 * cmp.teacher.f1(), 100.0 * cmp.student.f1());
    let pass = sf >= tf - 2.0
        && cmp.student_forward_passes == 1
        && cmp.teacher_forward_passes == 32
        && teachers.members.len() == ENSEMBLE_SIZE;
    outcome(
        pass,
        format!(
            "{} test patches: teacher f1 {tf:.2}, student f1 {sf:.2}; forward passes {} vs {}",
            cmp.patches, cmp.student_forward_passes, cmp.teacher_forward_passes
        ),
    )
}

fn disk(c: [f64; 2], radius: f64) -> Polygon {
    Polygon::new(
        (0..48)
            .map(|i| {
                let a = std::f64::consts::TAU * i as f64 / 48.0;
                [c[0] + radius * a.cos(), c[1] + radius * a.sin()]
            })
            .collect(),
    )
}

/// Blob pixels stamped onto frame `frame` of a copied heatmap series.
struct Outlier {
    frame: usize,
    pixels: Vec<usize>,
}

fn c9_monitoring(trained: &Trained) -> Result<Outcome> {
    let Some(bundle) = trained.bundle() else {
        return outcome(false, "needs the pixel model trained by criterion 7");
    };
    let (pixel, stats): (PixelClassifier, NormStats) = (bundle.load_pixel()?, bundle.load_stats()?);
    let start = YearMonth::new(2019, 1)?;
    let shrink = start.plus(16);
    let mut spec = SceneSpec::new(96, 96, start, 30, 9);
    spec.cloud_fraction = 0.03;
    spec.haze_probability = 0.1;
    // the outer ring stops at the shrink month, leaving 40% of the area
    spec.sites.push(PlantedSite {
        id: "outer".into(),
        polygon: disk([48.0, 48.0], 12.0),
        signature: spectra::WASTE,
        active_from: None,
        active_until: Some(shrink.plus(-1)),
    });
    spec.sites.push(PlantedSite {
        id: "core".into(),
        polygon: disk([48.0, 48.0], 12.0 * 0.4f64.sqrt()),
        signature: spectra::WASTE,
        active_from: None,
        active_until: None,
    });
    let scene = generate_scene(&spec)?;
    let region = Region::around([48, 48], 24, (96, 96));
    let (fs, monthly) = monitor_site(&scene.frames, "shrinking", region, &pixel, &stats, &spec.geo)?;
    let areas: Vec<(YearMonth, f64)> = fs.records().iter().map(|r| (r.month, r.area_ha)).collect();
    ensure!(areas.len() > 12, "only {} monitored months", areas.len());

    let plateau = |range: &[(YearMonth, f64)]| range.iter().map(|a| a.1).sum::<f64>() / range.len() as f64;
    let before = plateau(&areas[..3]);
    let after = plateau(&areas[areas.len() - 3..]);
    let drop = 1.0 - after / before;
    let midpoint = (before + after) / 2.0;
    let drop_month = areas.iter().find(|a| a.1 < midpoint).map(|a| a.0);
    let unmasked: Vec<f64> = monthly
        .heatmaps
        .iter()
        .map(|h| extract_contours(h, FOOTPRINT_THRESHOLD).iter().map(|c| c.pixel_count as f64).sum::<f64>())
        .collect();
    let unmasked_drop = monthly
        .months
        .iter()
        .zip(&unmasked)
        .find(|(_, a)| **a * spec.geo.pixel_hectares() < midpoint)
        .map(|(m, _)| *m);
    let drop_ok = (0.45..=0.75).contains(&drop);
    let month_ok = drop_month == Some(shrink);

    // single-frame outliers stamped into the real series away from the site
    let mut r = rng(9);
    let mut series = monthly.heatmaps.clone();
    let (w, h) = (series[0].width, series[0].height);
    let mut outliers = Vec::new();
    for frame in 0..series.len() - 1 {
        for _ in 0..2 {
            let corner = [[6.0, 6.0], [w as f64 - 7.0, 6.0], [6.0, h as f64 - 7.0], [w as f64 - 7.0, h as f64 - 7.0]][r.gen_range(0..4)];
            let c = [corner[0] + r.gen_range(-1.5..1.5), corner[1] + r.gen_range(-1.5..1.5)];
            let radius = r.gen_range(2.0..4.0);
            let mut pixels = Vec::new();
            for y in 0..h {
                for x in 0..w {
                    if (x as f64 - c[0]).powi(2) + (y as f64 - c[1]).powi(2) <= radius * radius {
                        pixels.push(y * w + x);
                    }
                }
            }
            outliers.push(Outlier { frame, pixels });
        }
    }
    // two outliers per frame may overlap; stamp them all before masking
    for o in &outliers {
        for &i in &o.pixels {
            series[o.frame].scores[i] = r.gen_range(0.8..1.0);
            series[o.frame].validity[i] = true;
        }
    }
    // a stamped pixel in frame f is a single-frame outlier only if no
    // following frame is also stamped there
    let mut removed = 0;
    let mut total = 0;
    for o in &outliers {
        let masked = rolling_mask(&series, o.frame)?;
        for &i in &o.pixels {
            let recurring = outliers.iter().any(|p| p.frame > o.frame && p.frame <= o.frame + 8 && p.pixels.contains(&i));
            if recurring {
                continue;
            }
            total += 1;
            if masked.scores[i] < FOOTPRINT_THRESHOLD {
                removed += 1;
            }
        }
    }
    let outliers_ok = total > 0 && removed == total;

    let fmt = |m: Option<YearMonth>| m.map_or("none".to_string(), |m| m.to_string());
    outcome(
        drop_ok && month_ok && outliers_ok,
        format!(
            "area {before:.2} -> {after:.2} ha, drop {:.0}% [{}]; planted shrink {shrink}, masked series drops at {} [{}], unmasked at {}; outlier pixels removed {removed}/{total} [{}]",
            100.0 * drop,
            if drop_ok { "ok" } else { "out of range" },
            fmt(drop_month),
            if month_ok { "ok" } else { "wrong month" },
            fmt(unmasked_drop),
            if outliers_ok { "ok" } else { "kept" },
        ),
    )
}

/// Distance by cases: perpendicular foot inside the segment, else the nearer
/// endpoint.
fn segment_oracle(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let d = |u: [f64; 2], v: [f64; 2]| ((u[0] - v[0]).powi(2) + (u[1] - v[1]).powi(2)).sqrt();
    let ab = [b[0] - a[0], b[1] - a[1]];
    if ab[0] * (p[0] - a[0]) + ab[1] * (p[1] - a[1]) <= 0.0 {
        return d(p, a);
    }
    if ab[0] * (p[0] - b[0]) + ab[1] * (p[1] - b[1]) >= 0.0 {
        return d(p, b);
    }
    (ab[0] * (p[1] - a[1]) - ab[1] * (p[0] - a[0])).abs() / d(a, b)
}

fn c10_waterways() -> Result<Outcome> {
    let mut r = rng(10);
    let mut inexact = 0;
    let mut formula_gap = 0.0f64;
    for case in 0..1000 {
        let p = [r.gen_range(-500.0..500.0), r.gen_range(-500.0..500.0)];
        let lines: Vec<Vec<[f64; 2]>> = (0..r.gen_range(1..5))
            .map(|_| (0..r.gen_range(2..8)).map(|_| [r.gen_range(-500.0..500.0), r.gen_range(-500.0..500.0)]).collect())
            .collect();
        let kinds = [WaterwayKind::River, WaterwayKind::Stream, WaterwayKind::Canal];
        let features = lines
            .iter()
            .enumerate()
            .map(|(i, pts)| WaterwayFeature {
                name: format!("w{case}-{i}"),
                kind: kinds[i % 3],
                points: pts.clone(),
                closed: false,
            })
            .collect();
        let got = distance_to_waterway(p, &WaterwaySet::new(features)?)?;
        let mut brute = (f64::INFINITY, String::new());
        let mut oracle = f64::INFINITY;
        for (i, pts) in lines.iter().enumerate() {
            for s in pts.windows(2) {
                let d = point_segment_distance(p, s[0], s[1]);
                if d < brute.0 {
                    brute = (d, format!("w{case}-{i}"));
                }
                oracle = oracle.min(segment_oracle(p, s[0], s[1]));
            }
        }
        if got.meters != brute.0 || got.name != brute.1 {
            inexact += 1;
        }
        formula_gap = formula_gap.max((got.meters - oracle).abs() / (1.0 + oracle));
    }
    let example = point_segment_distance([3.0, 4.0], [0.0, 0.0], [0.0, 8.0]);
    outcome(
        inexact == 0 && formula_gap <= 1e-9 && example == 3.0,
        format!("1000 instances, {inexact} differ from the brute-force minimum; case-split formula within {formula_gap:.1e}; (3,4) -> {example} m"),
    )
}

fn c11_tiling() -> Result<Outcome> {
    let start = YearMonth::new(2020, 1)?;
    let mut spec = SceneSpec::new(256, 256, start, 12, 11);
    spec.cloud_fraction = 0.05;
    random_layout(
        &mut spec,
        &Layout {
            sites: 4,
            confounders: 2,
            ..Layout::default()
        },
    )?;
    let scene = generate_scene(&spec)?;
    let pair = CompositePair::from_frames(&scene.frames, start.plus(6))?;
    let field = build_spectrogram_field(&pair.now, &pair.prev)?;
    let stats = NormStats::compute(field.spectrograms().flat_map(|s| s.values).collect::<Vec<_>>().iter())?;
    let model = make_pixel_classifier(17)?;
    let reference = infer_heatmap(&model, &field, &stats)?;
    let bits = |h: &Heatmap| h.scores.iter().map(|v| v.to_bits()).collect::<Vec<u32>>();
    let want = bits(&reference);
    let mut runs = 0;
    let mut differing = Vec::new();
    for tiles_per_side in [1usize, 2, 4] {
        let tile = 256usize.div_ceil(tiles_per_side);
        for workers in [1usize, 4, 8] {
            let h = infer_heatmap_tiled(&model, &field, &stats, tile, workers)?;
            runs += 1;
            if bits(&h) != want || h.validity != reference.validity {
                differing.push(format!("{} tiles x {workers} workers", tiles_per_side * tiles_per_side));
            }
        }
    }
    outcome(
        differing.is_empty(),
        format!("{runs} decompositions (1/4/16 tiles x 1/4/8 workers) vs untiled: {} differ {:?}", differing.len(), differing),
    )
}

fn main() {
    let only: BTreeSet<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |n: u32| only.is_empty() || only.contains(&n);
    let mut trained = Trained::default();
    let mut failed = 0;
    let mut report = |n: u32, name: &str, result: Result<Outcome>| {
        let (pass, detail) = match result {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e:#}")),
        };
        if !pass {
            failed += 1;
        }
        println!("criterion {n:>2} {:<24} {}  {detail}", name, if pass { "PASS" } else { "FAIL" });
    };
    if wanted(1) {
        report(1, "gradient check", c1_gradients());
    }
    if wanted(2) {
        report(2, "shapes and modes", c2_shapes());
    }
    if wanted(3) {
        report(3, "composite oracle", c3_composite());
    }
    if wanted(4) {
        report(4, "fusion arithmetic", c4_fusion());
    }
    if wanted(5) {
        report(5, "blob oracle", c5_blobs());
    }
    if wanted(6) {
        report(6, "contour area", c6_contours());
    }
    if wanted(7) || wanted(8) || wanted(9) {
        let r = c7_end_to_end(&mut trained);
        if wanted(7) {
            report(7, "end-to-end detection", r);
        }
    }
    if wanted(8) {
        report(8, "distillation", c8_distillation(&trained));
    }
    if wanted(9) {
        report(9, "monitoring", c9_monitoring(&trained));
    }
    if wanted(10) {
        report(10, "waterway distance", c10_waterways());
    }
    if wanted(11) {
        report(11, "tiling invariance", c11_tiling());
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
