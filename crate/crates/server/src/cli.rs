//! The `wastemap` command line.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;
use wastemap_core::dataengine::{sample_labeled_patches, CompositePair, LabelRecord, PatchSampling};
use wastemap_core::detect::{candidates_to_geojson, ModeName};
use wastemap_core::models::{config_hash, ModelBundle};

use crate::api::{self, AppState};
use crate::config::Config;
use crate::store::{read_labels, Store};
use crate::workflow::{self, LoadedScene};

pub const RUNS_DIR: &str = "runs";

#[derive(Debug, Parser)]
#[command(name = "wastemap", version, about = "Detect and monitor waste sites in multispectral raster series")]
pub struct Cli {
    /// Pipeline configuration (TOML).
    #[arg(long, global = true, default_value = "config/wastemap.toml")]
    pub config: PathBuf,
    /// Sensitivity mode for detection.
    #[arg(long, global = true, default_value = "high", value_parser = parse_mode)]
    pub mode: ModeName,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

fn parse_mode(s: &str) -> std::result::Result<ModeName, String> {
    s.parse().map_err(|e: wastemap_core::CoreError| e.to_string())
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training scene directories.
    #[arg(long = "scene", required = true)]
    pub scenes: Vec<PathBuf>,
    /// Site store whose review labels join the training set.
    #[arg(long)]
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic scene with planted sites and confounders.
    GenScene,
    /// Train the pixel spectrogram classifier and normalization statistics.
    TrainPixel(TrainArgs),
    /// Train the 32-member patch teacher ensemble.
    TrainTeachers(TrainArgs),
    /// Train the RBF-kernel SVM on flattened patches.
    TrainSvm(TrainArgs),
    /// Fuse teacher, SVM and pixel votes into soft targets and train the student.
    Distill(TrainArgs),
    /// Run detection on a scene and record candidates in a site store.
    Detect {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        models: PathBuf,
        /// Site store to add candidates to.
        #[arg(long)]
        store: Option<PathBuf>,
    },
    /// Track footprints and waterway distance of stored sites.
    Monitor {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        store: PathBuf,
    },
    /// Serve the site store over HTTP.
    Serve {
        #[arg(long)]
        store: PathBuf,
        /// Overrides the configured bind address.
        #[arg(long)]
        bind: Option<String>,
    },
    /// Score detection and the student against a scene's planted truth.
    Eval {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        models: PathBuf,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GenScene => "gen-scene",
            Command::TrainPixel(_) => "train-pixel",
            Command::TrainTeachers(_) => "train-teachers",
            Command::TrainSvm(_) => "train-svm",
            Command::Distill(_) => "distill",
            Command::Detect { .. } => "detect",
            Command::Monitor { .. } => "monitor",
            Command::Serve { .. } => "serve",
            Command::Eval { .. } => "eval",
        }
    }
}

#[derive(Debug, Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    config: String,
    config_hash: String,
    seed: u64,
    mode: ModeName,
    version: &'static str,
    started: chrono::DateTime<chrono::Utc>,
    finished: chrono::DateTime<chrono::Utc>,
    report: serde_json::Value,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_vec_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn load_training(cfg: &Config, args: &TrainArgs, seed: u64) -> Result<workflow::TrainingData> {
    let scenes = args
        .scenes
        .iter()
        .map(|d| workflow::load_scene(d))
        .collect::<Result<Vec<LoadedScene>>>()?;
    let labels: Vec<LabelRecord> = match &args.labels {
        Some(dir) => read_labels(dir)?,
        None => Vec::new(),
    };
    workflow::prepare_training_data(cfg, &scenes, &labels, seed)
}

/// Runs one parsed command and returns its report.
pub fn run(cli: &Cli) -> Result<serde_json::Value> {
    let started = chrono::Utc::now();
    let text = fs::read_to_string(&cli.config).with_context(|| format!("reading config {}", cli.config.display()))?;
    let cfg = Config::parse(&text)?;
    let hash = config_hash(&text);
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let seed = cli.seed;
    let report = match &cli.command {
        Command::GenScene => {
            let spec = workflow::scene_spec(&cfg.scene, seed)?;
            let scene = workflow::write_scene(&spec, &out)?;
            json!({
                "frames": scene.frames.len(),
                "sites": scene.truth.waste().count(),
                "greenhouses": scene.truth.greenhouses().count(),
            })
        }
        Command::TrainPixel(args) => {
            let data = load_training(&cfg, args, seed)?;
            serde_json::to_value(workflow::train_pixel_step(&cfg, &data, seed, &ModelBundle::open(&out)?, &hash)?)?
        }
        Command::TrainTeachers(args) => {
            let data = load_training(&cfg, args, seed)?;
            serde_json::to_value(workflow::train_teachers_step(&cfg, &data, seed, &ModelBundle::open(&out)?, &hash)?)?
        }
        Command::TrainSvm(args) => {
            let data = load_training(&cfg, args, seed)?;
            serde_json::to_value(workflow::train_svm_step(&cfg, &data, &ModelBundle::open(&out)?, &hash)?)?
        }
        Command::Distill(args) => {
            let data = load_training(&cfg, args, seed)?;
            serde_json::to_value(workflow::distill_step(&cfg, &data, seed, &ModelBundle::open(&out)?, &hash)?)?
        }
        Command::Detect { scene, models, store } => {
            let scene = workflow::load_scene(scene)?;
            let det = workflow::detect_step(&cfg, &scene, &ModelBundle::open(models)?, cli.mode, Some(&out))?;
            let added = match store {
                Some(dir) => Store::open(dir)?.add_candidates(det.accepted())?,
                None => 0,
            };
            json!({
                "timesteps": det.heatmaps.len(),
                "blobs": det.blobs.len(),
                "candidates": det.candidates.len(),
                "accepted": det.accepted().len(),
                "added_to_store": added,
            })
        }
        Command::Monitor { scene, models, store } => {
            let scene = workflow::load_scene(scene)?;
            let mut store = Store::open(store)?;
            let results = workflow::monitor_step(&cfg, &scene, &ModelBundle::open(models)?, &mut store)?;
            let sites: Vec<_> = results
                .iter()
                .map(|m| json!({ "site_id": m.site_id, "months": m.footprints.len(), "gaps": m.gaps, "waterway": m.waterway }))
                .collect();
            json!({ "sites": sites })
        }
        Command::Serve { store, bind } => {
            let state = AppState {
                store: Arc::new(tokio::sync::RwLock::new(Store::open(store)?)),
                imagery_url: cfg.server.imagery_url.clone(),
            };
            let bind = bind.clone().unwrap_or_else(|| cfg.server.bind.clone());
            tokio::runtime::Runtime::new()?.block_on(api::serve(state, &bind))?;
            json!({ "bind": bind })
        }
        Command::Eval { scene, models } => {
            let scene = workflow::load_scene(scene)?;
            let bundle = ModelBundle::open(models)?;
            let det = workflow::detect_step(&cfg, &scene, &bundle, cli.mode, Some(&out))?;
            let sites = workflow::evaluate_sites(&det, &scene.truth);
            let t = *workflow::latest_windows(&scene.frames, 1)?.last().expect("one window");
            let pair = CompositePair::from_frames(&scene.frames, t)?;
            let sampling = PatchSampling {
                positives_per_site: cfg.dataengine.positives_per_site,
                jitter: cfg.dataengine.jitter,
                negatives: cfg.dataengine.background_negatives,
                per_confounder: cfg.dataengine.per_confounder,
                seed,
            };
            let patches = sample_labeled_patches(&pair, &scene.truth, &sampling)?;
            let cmp = workflow::compare_student(&patches, &bundle.load_stats()?, &bundle.load_teachers()?, &bundle.load_student()?)?;
            fs::write(
                out.join("all_candidates.geojson"),
                serde_json::to_vec_pretty(&candidates_to_geojson(&det.candidates))?,
            )?;
            let report = json!({
                "mode": cli.mode,
                "sites": sites,
                "patches": cmp,
                "teacher_f1": cmp.teacher.f1(),
                "student_f1": cmp.student.f1(),
            });
            write_json(&out.join("eval_report.json"), &report)?;
            report
        }
    };
    let manifest = RunManifest {
        command: cli.command.name(),
        config: cli.config.display().to_string(),
        config_hash: hash,
        seed,
        mode: cli.mode,
        version: env!("CARGO_PKG_VERSION"),
        started,
        finished: chrono::Utc::now(),
        report: report.clone(),
    };
    write_json(&out.join(RUNS_DIR).join(format!("{}.json", cli.command.name())), &manifest)?;
    Ok(report)
}

/// Parses `args` and runs the command, returning the process exit code:
/// 0 on success, 1 for usage errors and 2 when the data or config is bad.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(report) => {
            println!("{}", serde_json::to_string_pretty(&report).unwrap_or_default());
            0
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            2
        }
    }
}
