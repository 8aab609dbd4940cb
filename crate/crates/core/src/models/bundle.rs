use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use wastemap_nn::{load_network, save_network};

use crate::dataengine::NormStats;
use crate::error::{CoreError, Result};

use super::ensemble::{TeacherEnsemble, ENSEMBLE_SIZE};
use super::patch::PatchClassifier;
use super::pixel::PixelClassifier;
use super::svm::RbfSvm;

pub const BUNDLE_MANIFEST: &str = "manifest.json";
const BUNDLE_FORMAT: &str = "wastemap-model-bundle";

/// Short SHA-256 of a canonical config rendering.
pub fn config_hash(text: &str) -> String {
    hex::encode(&Sha256::digest(text.as_bytes())[..8])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentEntry {
    pub files: Vec<String>,
    pub seeds: Vec<u64>,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub format: String,
    pub version: u32,
    pub crate_version: String,
    pub components: BTreeMap<String, ComponentEntry>,
}

impl Default for BundleManifest {
    fn default() -> Self {
        BundleManifest {
            format: BUNDLE_FORMAT.into(),
            version: 1,
            crate_version: env!("CARGO_PKG_VERSION").into(),
            components: BTreeMap::new(),
        }
    }
}

/// Directory of trained models: `pixel.wmnn`, `teachers/teacher_NN.wmnn`,
/// `svm.wmsv`, `student.wmnn`, `norm_stats.json` and a manifest recording
/// seeds and config hashes per component.
#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub dir: PathBuf,
}

impl ModelBundle {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        std::fs::create_dir_all(dir.as_ref())?;
        Ok(ModelBundle {
            dir: dir.as_ref().to_path_buf(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn require(&self, name: &str) -> Result<PathBuf> {
        let p = self.path(name);
        if !p.exists() {
            return Err(CoreError::InvalidInput(format!(
                "model bundle {} has no {name}; run the matching training step first",
                self.dir.display()
            )));
        }
        Ok(p)
    }

    pub fn manifest(&self) -> Result<BundleManifest> {
        let p = self.path(BUNDLE_MANIFEST);
        if !p.exists() {
            return Ok(BundleManifest::default());
        }
        let m: BundleManifest = serde_json::from_slice(&std::fs::read(p)?)?;
        if m.format != BUNDLE_FORMAT {
            return Err(CoreError::Format(format!("not a model bundle manifest: {}", m.format)));
        }
        Ok(m)
    }

    fn record(&self, component: &str, files: Vec<String>, seeds: Vec<u64>, config_hash: &str) -> Result<()> {
        let mut m = self.manifest()?;
        m.components.insert(
            component.into(),
            ComponentEntry {
                files,
                seeds,
                config_hash: config_hash.into(),
            },
        );
        std::fs::write(self.path(BUNDLE_MANIFEST), serde_json::to_vec_pretty(&m)?)?;
        Ok(())
    }

    pub fn save_stats(&self, stats: &NormStats, config_hash: &str) -> Result<()> {
        std::fs::write(self.path("norm_stats.json"), serde_json::to_vec_pretty(stats)?)?;
        self.record("norm_stats", vec!["norm_stats.json".into()], vec![], config_hash)
    }

    pub fn load_stats(&self) -> Result<NormStats> {
        Ok(serde_json::from_slice(&std::fs::read(self.require("norm_stats.json")?)?)?)
    }

    pub fn save_pixel(&self, m: &PixelClassifier, config_hash: &str) -> Result<()> {
        save_network(&m.net, self.path("pixel.wmnn"))?;
        self.record("pixel", vec!["pixel.wmnn".into()], vec![m.net.seed()], config_hash)
    }

    pub fn load_pixel(&self) -> Result<PixelClassifier> {
        PixelClassifier::from_network(load_network(self.require("pixel.wmnn")?)?)
    }

    pub fn save_teachers(&self, e: &TeacherEnsemble, config_hash: &str) -> Result<()> {
        std::fs::create_dir_all(self.path("teachers"))?;
        let mut files = Vec::new();
        for (i, m) in e.members.iter().enumerate() {
            let name = format!("teachers/teacher_{i:02}.wmnn");
            save_network(&m.net, self.path(&name))?;
            files.push(name);
        }
        std::fs::write(self.path("teachers/reports.json"), serde_json::to_vec_pretty(&e.reports)?)?;
        self.record("teachers", files, e.seeds.clone(), config_hash)
    }

    pub fn load_teachers(&self) -> Result<TeacherEnsemble> {
        let mut members = Vec::new();
        let mut seeds = Vec::new();
        for i in 0..ENSEMBLE_SIZE {
            let net = load_network(self.require(&format!("teachers/teacher_{i:02}.wmnn"))?)?;
            seeds.push(net.seed());
            members.push(PatchClassifier::from_network(net)?);
        }
        let mut e = TeacherEnsemble::from_members(members, seeds)?;
        if let Ok(bytes) = std::fs::read(self.path("teachers/reports.json")) {
            e.reports = serde_json::from_slice(&bytes)?;
        }
        Ok(e)
    }

    pub fn save_svm(&self, svm: &RbfSvm, config_hash: &str) -> Result<()> {
        svm.save(&self.path("svm.wmsv"))?;
        self.record("svm", vec!["svm.wmsv".into()], vec![], config_hash)
    }

    pub fn load_svm(&self) -> Result<RbfSvm> {
        RbfSvm::load(&self.require("svm.wmsv")?)
    }

    pub fn save_student(&self, m: &PatchClassifier, config_hash: &str) -> Result<()> {
        save_network(&m.net, self.path("student.wmnn"))?;
        self.record("student", vec!["student.wmnn".into()], vec![m.net.seed()], config_hash)
    }

    pub fn load_student(&self) -> Result<PatchClassifier> {
        PatchClassifier::from_network(load_network(self.require("student.wmnn")?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::make_pixel_classifier;
    use crate::raster::BAND_COUNT;

    #[test]
    fn components_round_trip_and_manifest_accumulates() {
        let dir = tempfile::tempdir().unwrap();
        let b = ModelBundle::open(dir.path()).unwrap();
        assert!(b.load_pixel().is_err());
        let m = make_pixel_classifier(11).unwrap();
        b.save_pixel(&m, "abc").unwrap();
        let stats = NormStats {
            mean: [0.5; BAND_COUNT],
            std: [0.25; BAND_COUNT],
        };
        b.save_stats(&stats, "def").unwrap();
        let back = b.load_pixel().unwrap();
        assert!(back.net.params().zip(m.net.params()).all(|(p, q)| p == q));
        assert_eq!(b.load_stats().unwrap(), stats);
        let manifest = b.manifest().unwrap();
        assert_eq!(manifest.components["pixel"].seeds, vec![11]);
        assert_eq!(manifest.components["norm_stats"].config_hash, "def");
    }

    #[test]
    fn hash_is_stable_and_short() {
        assert_eq!(config_hash("a"), config_hash("a"));
        assert_ne!(config_hash("a"), config_hash("b"));
        assert_eq!(config_hash("a").len(), 16);
    }
}
