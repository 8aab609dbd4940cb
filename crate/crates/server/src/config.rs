//! TOML configuration with one section per pipeline stage.

use std::path::Path;

use serde::{Deserialize, Serialize};
use wastemap_core::detect::SensitivityModes;
use wastemap_core::geo::YearMonth;
use wastemap_core::models::{AugmentMode, PatchArch, SvmParams};
use wastemap_nn::TrainConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("invalid config at `{key}`: {message}")]
    Invalid { key: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub scene: SceneConfig,
    pub dataengine: DataEngineConfig,
    pub pixel: TrainSection,
    pub teachers: TeacherConfig,
    pub svm: SvmConfig,
    pub student: StudentSection,
    pub detect: DetectConfig,
    pub monitor: MonitorConfig,
    pub server: ServerConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub width: usize,
    pub height: usize,
    pub start: YearMonth,
    pub months: usize,
    pub sites: usize,
    pub confounders: usize,
    pub site_radius: (f64, f64),
    pub min_separation: f64,
    pub rivers: usize,
    pub cloud_fraction: f64,
    pub haze_probability: f64,
    pub noise: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataEngineConfig {
    pub positives_per_site: usize,
    pub jitter: i64,
    pub background_negatives: usize,
    pub per_confounder: usize,
    pub negatives_per_patch: usize,
    pub unlabeled: usize,
    pub unlabeled_near_fraction: f64,
    pub heldout_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: f32,
    pub batch_size: usize,
    pub epochs: usize,
}

impl TrainSection {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed,
            ..TrainConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeacherConfig {
    pub filters: [usize; 3],
    pub dense: [usize; 2],
    pub dropout: f32,
    pub learning_rate: f32,
    pub batch_size: usize,
    pub epochs: usize,
    pub augment: AugmentMode,
}

impl TeacherConfig {
    pub fn arch(&self) -> PatchArch {
        PatchArch {
            filters: self.filters,
            dense: self.dense,
            dropout: self.dropout,
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainSection {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
        }
        .train_config(seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SvmConfig {
    pub c: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl SvmConfig {
    pub fn params(&self) -> SvmParams {
        SvmParams {
            c: self.c,
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
            ..SvmParams::default()
        }
    }
}

/// The student shares the teachers' architecture; only training differs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudentSection {
    pub learning_rate: f32,
    pub batch_size: usize,
    pub epochs: usize,
    pub augment: AugmentMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectConfig {
    /// Number of monthly windows averaged, ending at the latest full window.
    pub timesteps: usize,
    pub tile: usize,
    /// Inference threads; 0 uses every core.
    pub workers: usize,
    pub modes: SensitivityModes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitorConfig {
    /// Half side of the square window monitored around each site.
    pub region_half: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerConfig {
    pub bind: String,
    pub imagery_url: String,
}

impl Config {
    pub fn parse(text: &str) -> Result<Config, ConfigError> {
        let de = toml::Deserializer::new(text);
        let cfg: Config = serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Invalid {
            key: e.path().to_string(),
            message: e.inner().message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Config::parse(&text)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, message: &str| {
            Err(ConfigError::Invalid {
                key: key.into(),
                message: message.into(),
            })
        };
        if !(0.0..1.0).contains(&self.dataengine.heldout_fraction) {
            return bad("dataengine.heldout_fraction", "must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.dataengine.unlabeled_near_fraction) {
            return bad("dataengine.unlabeled_near_fraction", "must lie in [0, 1]");
        }
        if self.detect.timesteps == 0 {
            return bad("detect.timesteps", "must be positive");
        }
        if self.detect.tile == 0 {
            return bad("detect.tile", "must be positive");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SHIPPED: &str = include_str!("../../../config/wastemap.toml");

    #[test]
    fn shipped_config_parses() {
        let cfg = Config::parse(SHIPPED).unwrap();
        assert_eq!(cfg.detect.modes, SensitivityModes::default());
    }

    #[test]
    fn missing_key_is_named() {
        let text = SHIPPED.replace("min_sigma = 3.5\n", "");
        let err = Config::parse(&text).unwrap_err().to_string();
        assert!(err.contains("detect.modes.high"), "{err}");
        assert!(err.contains("min_sigma"), "{err}");
        let text = SHIPPED.replace("epochs = 12\n", "");
        let err = Config::parse(&text).unwrap_err().to_string();
        assert!(err.contains("pixel") && err.contains("epochs"), "{err}");
    }

    #[test]
    fn unknown_key_and_bad_value_are_named() {
        let text = SHIPPED.replace("[monitor]\n", "[monitor]\nradius = 3\n");
        let err = Config::parse(&text).unwrap_err().to_string();
        assert!(err.contains("monitor") && err.contains("radius"), "{err}");
        let text = SHIPPED.replace("heldout_fraction = 0.2", "heldout_fraction = 1.5");
        let err = Config::parse(&text).unwrap_err().to_string();
        assert!(err.contains("dataengine.heldout_fraction"), "{err}");
    }
}
