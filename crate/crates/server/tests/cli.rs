mod common;

use std::path::Path;
use std::process::{Command, Output};

fn wastemap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wastemap"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn unknown_command_is_a_usage_error() {
    let out = wastemap(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    let out = wastemap(&["detect", "--mode", "extreme", "--scene", "x", "--models", "y"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(wastemap(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_config_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, common::SHIPPED.replace("patch_threshold = 0.3\n", "")).unwrap();
    let out = wastemap(&["gen-scene", "--config", p(&cfg), "--out", p(&dir.path().join("s"))]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("detect.modes.high") && err.contains("patch_threshold"), "{err}");
}

#[test]
fn missing_scene_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, common::tiny_config_text()).unwrap();
    let out = wastemap(&[
        "detect",
        "--config",
        p(&cfg),
        "--scene",
        p(&dir.path().join("absent")),
        "--models",
        p(&dir.path().join("m")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn full_pipeline_on_a_tiny_scene() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, common::tiny_config_text()).unwrap();
    let c = p(&cfg);
    let train = dir.path().join("train");
    let test = dir.path().join("test");
    let models = dir.path().join("models");
    let det = dir.path().join("det");
    let store = dir.path().join("store");
    let ok = |args: &[&str]| {
        let out = wastemap(args);
        assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        serde_json::from_slice::<serde_json::Value>(&out.stdout).unwrap()
    };
    ok(&["gen-scene", "--config", c, "--seed", "1", "--out", p(&train)]);
    let gen = ok(&["gen-scene", "--config", c, "--seed", "2", "--out", p(&test)]);
    assert_eq!(gen["sites"], 2);
    for step in ["train-pixel", "train-svm", "train-teachers", "distill"] {
        ok(&[step, "--config", c, "--scene", p(&train), "--out", p(&models)]);
        assert!(models.join("runs").join(format!("{step}.json")).exists());
    }
    let report = ok(&[
        "detect", "--config", c, "--mode", "high", "--scene", p(&test), "--models", p(&models), "--out", p(&det), "--store",
        p(&store),
    ]);
    assert_eq!(report["timesteps"], 2);
    assert!(det.join("candidates.geojson").exists());
    assert!(det.join("heatmap_mean.json").exists() || std::fs::read_dir(&det).unwrap().count() > 3);
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(det.join("runs").join("detect.json")).unwrap()).unwrap();
    assert_eq!(manifest["mode"], "high");
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 16);

    ok(&["monitor", "--config", c, "--scene", p(&test), "--models", p(&models), "--store", p(&store), "--out", p(&det)]);
    let eval = ok(&["eval", "--config", c, "--scene", p(&test), "--models", p(&models), "--out", p(&det)]);
    assert_eq!(eval["sites"]["sites"], 2);
    assert!(eval["sites"]["recall"].as_f64().unwrap() >= 0.0);
    assert_eq!(eval["patches"]["teacher_forward_passes"], 32);
    assert!(det.join("eval_report.json").exists());
}
