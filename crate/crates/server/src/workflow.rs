//! Pipeline steps behind the CLI subcommands. Scenes live in directories
//! holding a raster series, ground truth and waterways; trained models live
//! in a model bundle.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use wastemap_core::dataengine::synth::{generate_scene, random_layout, GroundTruth, Layout, SceneSpec};
use wastemap_core::dataengine::{
    assemble_pixel_dataset, pair_starts, patches_from_label_records, sample_labeled_patches, sample_unlabeled_patches,
    CompositePair, LabelRecord, LabeledPatch, NormStats, PatchSampling, PatchTensor, PixelDatasetOptions,
};
use wastemap_core::detect::{run_detection, DetectionModels, DetectionOutput, ModeName, SiteStatus, Tiling};
use wastemap_core::distill::{
    build_soft_targets, heldout_split, majority_vote, measure_model_stats, train_student, write_soft_targets, BinaryMetrics,
    DistillModels, ModelStats, StudentConfig,
};
use wastemap_core::geo::{GeoTransform, YearMonth};
use wastemap_core::models::{
    flatten_patches, patch_batch, train_pixel_classifier, train_svm, train_teacher_ensemble, EnsembleConfig, ModelBundle,
    PatchClassifier, TeacherEnsemble,
};
use wastemap_core::monitor::{
    distance_to_waterway, footprints_to_geojson, monitor_site, point_segment_distance, Region, WaterwayDistance, WaterwaySet,
};
use wastemap_core::raster::{read_series, write_series, RasterFrame};
use wastemap_nn::Tensor;

use crate::config::{Config, SceneConfig};
use crate::store::{FootprintSummary, Store};

pub const SERIES_DIR: &str = "series";
pub const TRUTH_FILE: &str = "truth.geojson";
pub const WATERWAYS_FILE: &str = "waterways.geojson";
pub const SCENE_FILE: &str = "scene.json";
pub const SOFT_TARGETS_FILE: &str = "soft_targets.jsonl";

/// Scenes generated from different seeds sit on separate tiles of a grid
/// 0.05° apart, so their geographic coordinates never overlap.
pub fn scene_geo(seed: u64) -> GeoTransform {
    let g = GeoTransform::default();
    GeoTransform {
        origin_lon: g.origin_lon + 0.05 * (seed % 64) as f64,
        origin_lat: g.origin_lat - 0.05 * ((seed / 64) % 64) as f64,
        ..g
    }
}

pub fn scene_spec(cfg: &SceneConfig, seed: u64) -> Result<SceneSpec> {
    let mut spec = SceneSpec::new(cfg.width, cfg.height, cfg.start, cfg.months, seed);
    spec.cloud_fraction = cfg.cloud_fraction;
    spec.haze_probability = cfg.haze_probability;
    spec.noise = cfg.noise;
    spec.geo = scene_geo(seed);
    let layout = Layout {
        sites: cfg.sites,
        confounders: cfg.confounders,
        site_radius: cfg.site_radius,
        min_separation: cfg.min_separation,
        rivers: cfg.rivers,
        ..Layout::default()
    };
    random_layout(&mut spec, &layout)?;
    Ok(spec)
}

/// A scene directory loaded into memory.
#[derive(Debug, Clone)]
pub struct LoadedScene {
    pub frames: Vec<RasterFrame>,
    pub geo: GeoTransform,
    pub truth: GroundTruth,
    pub waterways: WaterwaySet,
}

/// Renders `spec` and writes it as a scene directory under `out`.
pub fn write_scene(spec: &SceneSpec, out: &Path) -> Result<LoadedScene> {
    let scene = generate_scene(spec)?;
    fs::create_dir_all(out)?;
    write_series(&out.join(SERIES_DIR), &scene.frames, &spec.geo)?;
    fs::write(out.join(TRUTH_FILE), serde_json::to_vec_pretty(&scene.truth.to_geojson(&spec.geo))?)?;
    let waterways = WaterwaySet::from_rivers(&spec.rivers, &spec.geo)?;
    fs::write(out.join(WATERWAYS_FILE), serde_json::to_vec_pretty(&waterways.to_geojson(&spec.geo))?)?;
    fs::write(out.join(SCENE_FILE), serde_json::to_vec_pretty(spec)?)?;
    Ok(LoadedScene {
        frames: scene.frames,
        geo: spec.geo,
        truth: scene.truth,
        waterways,
    })
}

fn read_geojson(path: &Path) -> Result<geojson::FeatureCollection> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let gj: geojson::GeoJson = text.parse().with_context(|| format!("parsing {}", path.display()))?;
    Ok(geojson::FeatureCollection::try_from(gj)?)
}

pub fn load_scene(dir: &Path) -> Result<LoadedScene> {
    let (frames, geo) = read_series(&dir.join(SERIES_DIR)).with_context(|| format!("reading scene {}", dir.display()))?;
    let truth_path = dir.join(TRUTH_FILE);
    let truth = if truth_path.exists() {
        GroundTruth::from_geojson(&read_geojson(&truth_path)?, &geo)?
    } else {
        GroundTruth::default()
    };
    let ww_path = dir.join(WATERWAYS_FILE);
    let waterways = if ww_path.exists() {
        WaterwaySet::from_geojson(&read_geojson(&ww_path)?, &geo)?
    } else {
        WaterwaySet::default()
    };
    Ok(LoadedScene {
        frames,
        geo,
        truth,
        waterways,
    })
}

/// Start months of the last `n` pairable three-month windows.
pub fn latest_windows(frames: &[RasterFrame], n: usize) -> Result<Vec<YearMonth>> {
    let starts = pair_starts(frames, true);
    if starts.is_empty() {
        bail!("series is too short to pair two composites six months apart");
    }
    Ok(starts[starts.len().saturating_sub(n)..].to_vec())
}

/// Labeled and unlabeled crops drawn from the training scenes.
#[derive(Debug, Clone)]
pub struct TrainingData {
    pub train: Vec<LabeledPatch>,
    pub heldout: Vec<LabeledPatch>,
    pub unlabeled: Vec<LabeledPatch>,
}

/// Crops cut around the same planted feature share a group, so the held-out
/// split never sees a feature the training split saw.
fn split_group(id: &str) -> &str {
    let parts: Vec<&str> = id.rsplitn(3, '-').collect();
    if parts.len() == 3 && (parts[1] == "pos" || parts[1] == "neg") && !parts[2].ends_with("/bg") {
        parts[2]
    } else {
        id
    }
}

/// Cuts labeled crops around the planted features of each scene (plus crops
/// around review `labels` falling inside it), splits them by feature into
/// training and held-out sets, and samples unlabeled crops.
pub fn prepare_training_data(cfg: &Config, scenes: &[LoadedScene], labels: &[LabelRecord], seed: u64) -> Result<TrainingData> {
    let mut labeled = Vec::new();
    let mut unlabeled = Vec::new();
    for (i, scene) in scenes.iter().enumerate() {
        let t = *latest_windows(&scene.frames, 1)?.last().expect("one window");
        let pair = CompositePair::from_frames(&scene.frames, t)?;
        let sampling = PatchSampling {
            positives_per_site: cfg.dataengine.positives_per_site,
            jitter: cfg.dataengine.jitter,
            negatives: cfg.dataengine.background_negatives,
            per_confounder: cfg.dataengine.per_confounder,
            seed: seed.wrapping_add(i as u64),
        };
        let mut patches = sample_labeled_patches(&pair, &scene.truth, &sampling)?;
        patches.extend(patches_from_label_records(&pair, &scene.geo, labels).into_iter().map(|mut p| {
            p.id = format!("review/{}", p.id);
            p
        }));
        for mut p in patches {
            p.id = format!("s{i}/{}", p.id);
            labeled.push(p);
        }
        let near = cfg.dataengine.unlabeled_near_fraction;
        for mut p in sample_unlabeled_patches(&pair, &scene.truth, cfg.dataengine.unlabeled, near, seed.wrapping_add(1000 + i as u64))? {
            p.id = format!("s{i}/{}", p.id);
            unlabeled.push(p);
        }
    }
    let mut groups: Vec<&str> = labeled.iter().map(|p| split_group(&p.id)).collect();
    groups.sort();
    groups.dedup();
    let (_, held_idx) = heldout_split(groups.len(), cfg.dataengine.heldout_fraction, seed);
    let held: std::collections::HashSet<&str> = held_idx.iter().map(|&i| groups[i]).collect();
    let (heldout, train): (Vec<LabeledPatch>, Vec<LabeledPatch>) =
        labeled.iter().cloned().partition(|p| held.contains(split_group(&p.id)));
    log::info!(
        "{} training, {} held-out and {} unlabeled patches",
        train.len(),
        heldout.len(),
        unlabeled.len()
    );
    Ok(TrainingData {
        train,
        heldout,
        unlabeled,
    })
}

/// Normalized tensors and hard targets of labeled patches.
pub fn labeled_batch(patches: &[LabeledPatch], stats: &NormStats) -> Result<(Tensor, Vec<f32>)> {
    let mut tensors = Vec::with_capacity(patches.len());
    let mut targets = Vec::with_capacity(patches.len());
    for p in patches {
        let Some(t) = p.label.target() else {
            bail!("patch {} has no hard label", p.id);
        };
        tensors.push(p.tensor(stats)?);
        targets.push(t);
    }
    Ok((patch_batch(&tensors), targets))
}

fn unlabeled_batch(patches: &[LabeledPatch], stats: &NormStats) -> Result<Tensor> {
    let tensors: Vec<PatchTensor> = patches.iter().map(|p| p.tensor(stats)).collect::<wastemap_core::Result<_>>()?;
    Ok(patch_batch(&tensors))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PixelReport {
    pub positives: usize,
    pub negatives: usize,
    pub ndvi_removed: usize,
    pub final_accuracy: f32,
    pub loss_history: Vec<f32>,
}

pub fn train_pixel_step(cfg: &Config, data: &TrainingData, seed: u64, bundle: &ModelBundle, hash: &str) -> Result<PixelReport> {
    let opts = PixelDatasetOptions {
        negatives_per_patch: Some(cfg.dataengine.negatives_per_patch),
        seed,
    };
    let ds = assemble_pixel_dataset(&data.train, &opts)?;
    log::info!("pixel dataset: {} positive, {} negative spectrograms", ds.positives.len(), ds.negatives.len());
    let (model, report) = train_pixel_classifier(&ds, &cfg.pixel.train_config(seed))?;
    bundle.save_stats(&ds.stats, hash)?;
    bundle.save_pixel(&model, hash)?;
    Ok(PixelReport {
        positives: ds.positives.len(),
        negatives: ds.negatives.len(),
        ndvi_removed: ds.ndvi_removed,
        final_accuracy: report.final_accuracy,
        loss_history: report.loss_history,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TeacherReport {
    pub patches: usize,
    pub positives: usize,
    pub member_accuracy: Vec<f32>,
}

pub fn train_teachers_step(cfg: &Config, data: &TrainingData, seed: u64, bundle: &ModelBundle, hash: &str) -> Result<TeacherReport> {
    let stats = bundle.load_stats()?;
    let (x, y) = labeled_batch(&data.train, &stats)?;
    let ens_cfg = EnsembleConfig {
        arch: cfg.teachers.arch(),
        train: cfg.teachers.train_config(seed),
        augment: cfg.teachers.augment,
        base_seed: seed,
    };
    let ensemble = train_teacher_ensemble(&x, &y, &ens_cfg)?;
    bundle.save_teachers(&ensemble, hash)?;
    Ok(TeacherReport {
        patches: y.len(),
        positives: y.iter().filter(|&&t| t >= 0.5).count(),
        member_accuracy: ensemble.reports.iter().map(|r| r.train_accuracy).collect(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SvmReport {
    pub patches: usize,
    pub support_vectors: usize,
    pub gamma: f64,
    pub train_accuracy: f64,
}

pub fn train_svm_step(cfg: &Config, data: &TrainingData, bundle: &ModelBundle, hash: &str) -> Result<SvmReport> {
    let stats = bundle.load_stats()?;
    let (x, y) = labeled_batch(&data.train, &stats)?;
    let (flat, dim) = flatten_patches(&x);
    let labels: Vec<bool> = y.iter().map(|&t| t >= 0.5).collect();
    let svm = train_svm(&flat, dim, &labels, &cfg.svm.params())?;
    let preds = svm.predict(&flat)?;
    bundle.save_svm(&svm, hash)?;
    Ok(SvmReport {
        patches: labels.len(),
        support_vectors: svm.num_support(),
        gamma: svm.gamma,
        train_accuracy: BinaryMetrics::from_predictions(&preds, &labels).accuracy(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistillReport {
    pub svm_stats: ModelStats,
    pub pixel_stats: ModelStats,
    pub soft_targets: usize,
    pub mean_soft_p: f64,
    /// Agreement of thresholded soft targets with the hidden truth of the
    /// unlabeled crops.
    pub soft_accuracy: f64,
    pub student_accuracy: f32,
}

pub fn distill_step(cfg: &Config, data: &TrainingData, seed: u64, bundle: &ModelBundle, hash: &str) -> Result<DistillReport> {
    let stats = bundle.load_stats()?;
    let pixel = bundle.load_pixel()?;
    let teachers = bundle.load_teachers()?;
    let svm = bundle.load_svm()?;
    let (svm_stats, pixel_stats) = measure_model_stats(&data.heldout, &svm, &pixel, &stats)?;
    log::info!(
        "held-out rates: svm tpr {:.3} fpr {:.3}, pixel tpr {:.3} fpr {:.3}",
        svm_stats.tpr(),
        svm_stats.fpr(),
        pixel_stats.tpr(),
        pixel_stats.fpr()
    );
    let models = DistillModels {
        ensemble: &teachers,
        svm: &svm,
        pixel: &pixel,
        stats: &stats,
        svm_stats,
        pixel_stats,
    };
    let soft = build_soft_targets(&data.unlabeled, &models)?;
    write_soft_targets(&bundle.dir.join(SOFT_TARGETS_FILE), &soft)?;
    let (hard_x, hard_y) = labeled_batch(&data.train, &stats)?;
    let soft_x = unlabeled_batch(&data.unlabeled, &stats)?;
    let soft_y: Vec<f32> = soft.iter().map(|s| s.soft_p as f32).collect();
    let student_cfg = StudentConfig {
        arch: cfg.teachers.arch(),
        train: cfg.student_train_config(seed),
        augment: cfg.student.augment,
    };
    let (student, report) = train_student(&hard_x, &hard_y, &soft_x, &soft_y, &student_cfg)?;
    bundle.save_student(&student, hash)?;
    let truth: Vec<bool> = data.unlabeled.iter().map(|p| p.truth.unwrap_or(false)).collect();
    let soft_pred: Vec<bool> = soft.iter().map(|s| s.soft_p >= 0.5).collect();
    Ok(DistillReport {
        svm_stats,
        pixel_stats,
        soft_targets: soft.len(),
        mean_soft_p: soft.iter().map(|s| s.soft_p).sum::<f64>() / soft.len().max(1) as f64,
        soft_accuracy: BinaryMetrics::from_predictions(&soft_pred, &truth).accuracy(),
        student_accuracy: report.final_accuracy,
    })
}

impl Config {
    pub fn student_train_config(&self, seed: u64) -> wastemap_nn::TrainConfig {
        crate::config::TrainSection {
            learning_rate: self.student.learning_rate,
            batch_size: self.student.batch_size,
            epochs: self.student.epochs,
        }
        .train_config(seed)
    }
}

/// Patch-level scores of the teacher majority and the student against hard
/// labels or hidden truth.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PatchComparison {
    pub patches: usize,
    pub teacher: BinaryMetrics,
    pub student: BinaryMetrics,
    pub teacher_forward_passes: usize,
    pub student_forward_passes: usize,
}

pub fn compare_student(patches: &[LabeledPatch], stats: &NormStats, teachers: &TeacherEnsemble, student: &PatchClassifier) -> Result<PatchComparison> {
    let truth: Vec<bool> = patches
        .iter()
        .map(|p| p.label.target().map(|t| t >= 0.5).or(p.truth).unwrap_or(false))
        .collect();
    let x = unlabeled_batch(patches, stats)?;
    let teacher_pred: Vec<bool> = teachers.votes(&x)?.iter().map(majority_vote).collect();
    let student_scores = student.score(&x)?;
    Ok(PatchComparison {
        patches: patches.len(),
        teacher: BinaryMetrics::from_predictions(&teacher_pred, &truth),
        student: BinaryMetrics::from_scores(&student_scores, &truth),
        teacher_forward_passes: teachers.members.len(),
        student_forward_passes: 1,
    })
}

/// Heatmaps, patch grid and candidates for the last `cfg.detect.timesteps`
/// windows of a scene, written under `out`.
pub fn detect_step(cfg: &Config, scene: &LoadedScene, bundle: &ModelBundle, mode: ModeName, out: Option<&Path>) -> Result<DetectionOutput> {
    let stats = bundle.load_stats()?;
    let pixel = bundle.load_pixel()?;
    let student = bundle.load_student()?;
    let models = DetectionModels {
        pixel: &pixel,
        patch: &student,
        stats: &stats,
    };
    let timesteps = latest_windows(&scene.frames, cfg.detect.timesteps)?;
    let tiling = Tiling {
        tile: cfg.detect.tile,
        workers: cfg.detect.workers,
    };
    Ok(run_detection(&scene.frames, &models, &cfg.detect.modes.get(mode), &timesteps, tiling, &scene.geo, out)?)
}

/// Site-level comparison of a detection run with planted ground truth.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SiteEvaluation {
    pub sites: usize,
    pub detected: usize,
    pub recall: f64,
    pub accepted: usize,
    pub false_positives: usize,
    pub precision: f64,
    /// Greenhouses with a blob candidate before patch validation.
    pub greenhouses_flagged: usize,
    /// Flagged greenhouses with no candidate surviving patch validation.
    pub greenhouses_rejected: usize,
    pub missed_sites: Vec<String>,
}

/// Distance from a point to a polygon: zero inside, else to the nearest edge.
fn distance_to_polygon(p: [f64; 2], poly: &wastemap_core::geo::Polygon) -> f64 {
    if poly.contains(p) {
        return 0.0;
    }
    let pts = &poly.exterior;
    (0..pts.len())
        .map(|i| point_segment_distance(p, pts[i], pts[(i + 1) % pts.len()]))
        .fold(f64::INFINITY, f64::min)
}

/// Pixels a candidate center may lie outside a planted polygon and still
/// count as hitting it.
pub const MATCH_TOLERANCE_PX: f64 = 3.0;

pub fn evaluate_sites(out: &DetectionOutput, truth: &GroundTruth) -> SiteEvaluation {
    let center = |c: &wastemap_core::detect::CandidateSite| [c.center_px[0] as f64 + 0.5, c.center_px[1] as f64 + 0.5];
    let hits = |c: &wastemap_core::detect::CandidateSite, f: &wastemap_core::dataengine::synth::TruthFeature| {
        distance_to_polygon(center(c), &f.polygon) <= MATCH_TOLERANCE_PX
    };
    let waste: Vec<_> = truth.waste().collect();
    let accepted = out.accepted();
    let missed: Vec<String> = waste
        .iter()
        .filter(|f| !accepted.iter().any(|c| hits(c, f)))
        .map(|f| f.id.clone())
        .collect();
    let false_positives = accepted.iter().filter(|c| !waste.iter().any(|f| hits(c, f))).count();
    let mut flagged = 0;
    let mut rejected = 0;
    for g in truth.greenhouses() {
        let on_g = |c: &&wastemap_core::detect::CandidateSite| hits(c, g) && !waste.iter().any(|f| hits(c, f));
        if out.candidates.iter().any(|c| on_g(&c)) {
            flagged += 1;
            if !accepted.iter().any(|c| on_g(&c)) {
                rejected += 1;
            }
        }
    }
    let detected = waste.len() - missed.len();
    SiteEvaluation {
        sites: waste.len(),
        detected,
        recall: if waste.is_empty() { 0.0 } else { detected as f64 / waste.len() as f64 },
        accepted: accepted.len(),
        false_positives,
        precision: if accepted.is_empty() {
            0.0
        } else {
            (accepted.len() - false_positives) as f64 / accepted.len() as f64
        },
        greenhouses_flagged: flagged,
        greenhouses_rejected: rejected,
        missed_sites: missed,
    }
}

/// Footprint series and waterway distance of one monitored site.
#[derive(Debug, Clone)]
pub struct SiteMonitoring {
    pub site_id: String,
    pub footprints: Vec<FootprintSummary>,
    pub contours: geojson::FeatureCollection,
    pub waterway: Option<WaterwayDistance>,
    pub gaps: Vec<YearMonth>,
}

/// Tracks every site of `store` that was not rejected and records the
/// results back into it.
pub fn monitor_step(cfg: &Config, scene: &LoadedScene, bundle: &ModelBundle, store: &mut Store) -> Result<Vec<SiteMonitoring>> {
    let stats = bundle.load_stats()?;
    let pixel = bundle.load_pixel()?;
    let Some(first) = scene.frames.first() else {
        bail!("scene has no frames");
    };
    let dims = (first.width, first.height);
    let sites: Vec<_> = store
        .list_sites(&Default::default())?
        .into_iter()
        .filter(|r| r.site.status != SiteStatus::Rejected)
        .map(|r| r.site)
        .collect();
    let mut out = Vec::with_capacity(sites.len());
    for site in sites {
        let [cx, cy] = site.center_px;
        if cx >= dims.0 || cy >= dims.1 {
            log::warn!("site {} lies outside this scene; not monitored", site.id);
            continue;
        }
        let region = Region::around(site.center_px, cfg.monitor.region_half, dims);
        let (fs, monthly) = monitor_site(&scene.frames, &site.id, region, &pixel, &stats, &scene.geo)?;
        let footprints = fs
            .records()
            .iter()
            .map(|r| FootprintSummary {
                month: r.month,
                area_ha: r.area_ha,
            })
            .collect();
        let waterway = if scene.waterways.features().is_empty() {
            None
        } else {
            let p = scene.geo.pixel_to_meters(cx as f64 + 0.5, cy as f64 + 0.5);
            Some(distance_to_waterway(p, &scene.waterways)?)
        };
        let m = SiteMonitoring {
            site_id: site.id.clone(),
            footprints,
            contours: footprints_to_geojson(&fs, &scene.geo),
            waterway,
            gaps: monthly.gaps,
        };
        store.set_monitoring(&m.site_id, m.footprints.clone(), m.contours.clone(), m.waterway.clone())?;
        out.push(m);
    }
    Ok(out)
}
