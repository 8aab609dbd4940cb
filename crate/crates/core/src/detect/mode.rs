use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::CoreError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    Low,
    Med,
    High,
}

impl fmt::Display for ModeName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModeName::Low => "low",
            ModeName::Med => "med",
            ModeName::High => "high",
        })
    }
}

impl FromStr for ModeName {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self, CoreError> {
        match s {
            "low" => Ok(ModeName::Low),
            "med" => Ok(ModeName::Med),
            "high" => Ok(ModeName::High),
            other => Err(CoreError::InvalidInput(format!("unknown sensitivity mode {other:?} (expected low, med or high)"))),
        }
    }
}

/// Thresholds trading recall against false positives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityMode {
    #[serde(skip_deserializing, default = "default_name")]
    pub name: ModeName,
    pub pixel_threshold: f32,
    pub min_sigma: f64,
    pub patch_threshold: f32,
}

fn default_name() -> ModeName {
    ModeName::Med
}

/// The three named modes, as configured.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, from = "RawModes")]
pub struct SensitivityModes {
    pub low: SensitivityMode,
    pub med: SensitivityMode,
    pub high: SensitivityMode,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModes {
    low: SensitivityMode,
    med: SensitivityMode,
    high: SensitivityMode,
}

impl From<RawModes> for SensitivityModes {
    fn from(r: RawModes) -> Self {
        let named = |mut m: SensitivityMode, name| {
            m.name = name;
            m
        };
        SensitivityModes {
            low: named(r.low, ModeName::Low),
            med: named(r.med, ModeName::Med),
            high: named(r.high, ModeName::High),
        }
    }
}

impl SensitivityModes {
    pub fn get(&self, name: ModeName) -> SensitivityMode {
        let mut m = match name {
            ModeName::Low => self.low,
            ModeName::Med => self.med,
            ModeName::High => self.high,
        };
        m.name = name;
        m
    }
}

impl Default for SensitivityModes {
    fn default() -> Self {
        let mode = |name, pixel_threshold, min_sigma, patch_threshold| SensitivityMode {
            name,
            pixel_threshold,
            min_sigma,
            patch_threshold,
        };
        SensitivityModes {
            low: mode(ModeName::Low, 0.9, 5.0, 0.6),
            med: mode(ModeName::Med, 0.6, 5.0, 0.6),
            high: mode(ModeName::High, 0.6, 3.5, 0.3),
        }
    }
}
