use std::fs;
use std::path::{Path, PathBuf};

use paint_core::data::Dataset;
use paint_core::nn::Checkpoint;
use paint_core::orl::PolicyBundle;
use paint_core::reward::{LabelSet, RewardModel};
use paint_core::{Error, Result};

/// Environment variable naming the artifact root.
pub const DATA_DIR_VAR: &str = "PAINT_DATA_DIR";

/// Artifact layout under one root:
///
/// ```text
/// datasets/<name>/ep_*.traj
/// labels/<name>.jsonl
/// rewards/<name>.ckpt
/// bundles/<name>/
/// results/<experiment>.{jsonl,txt}
/// ```
///
/// A name containing a path separator is taken as a path as-is.
#[derive(Debug, Clone)]
pub struct Store {
    pub root: PathBuf,
}

fn is_path(name: &str) -> bool {
    name.contains('/') || name.contains(std::path::MAIN_SEPARATOR)
}

impl Store {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    /// `$PAINT_DATA_DIR`, or `./paint-data`.
    pub fn from_env() -> Self {
        Self::new(std::env::var_os(DATA_DIR_VAR).map(PathBuf::from).unwrap_or_else(|| "paint-data".into()))
    }

    fn resolve(&self, kind: &str, name: &str, ext: &str) -> PathBuf {
        if is_path(name) {
            PathBuf::from(name)
        } else {
            self.root.join(kind).join(format!("{name}{ext}"))
        }
    }

    pub fn dataset_dir(&self, name: &str) -> PathBuf {
        self.resolve("datasets", name, "")
    }

    pub fn labels_path(&self, name: &str) -> PathBuf {
        self.resolve("labels", name, ".jsonl")
    }

    pub fn reward_path(&self, name: &str) -> PathBuf {
        self.resolve("rewards", name, ".ckpt")
    }

    pub fn bundle_dir(&self, name: &str) -> PathBuf {
        self.resolve("bundles", name, "")
    }

    pub fn results_dir(&self) -> PathBuf {
        self.root.join("results")
    }

    pub fn load_dataset(&self, name: &str) -> Result<Dataset> {
        let ds = Dataset::load_dir(&self.dataset_dir(name))?;
        if ds.episodes.is_empty() {
            return Err(Error::MissingArtifact(format!("dataset {name} has no episodes")));
        }
        Ok(ds)
    }

    pub fn save_dataset(&self, name: &str, ds: &Dataset) -> Result<PathBuf> {
        let dir = self.dataset_dir(name);
        if dir.exists() {
            // stale episodes from a larger earlier run would otherwise linger
            fs::remove_dir_all(&dir)?;
        }
        ds.save_dir(&dir)?;
        Ok(dir)
    }

    pub fn load_labels(&self, name: &str) -> Result<LabelSet> {
        let p = self.labels_path(name);
        if !p.exists() {
            return Err(Error::MissingArtifact(format!("labels {}", p.display())));
        }
        LabelSet::load(&p)
    }

    pub fn save_labels(&self, name: &str, labels: &LabelSet) -> Result<PathBuf> {
        let p = self.labels_path(name);
        ensure_parent(&p)?;
        labels.save(&p)?;
        Ok(p)
    }

    pub fn load_reward(&self, name: &str) -> Result<RewardModel> {
        let p = self.reward_path(name);
        if !p.exists() {
            return Err(Error::MissingArtifact(format!("reward model {}", p.display())));
        }
        RewardModel::from_checkpoint(Checkpoint::load(&p)?)
    }

    pub fn save_reward(&self, name: &str, model: &RewardModel) -> Result<PathBuf> {
        let p = self.reward_path(name);
        ensure_parent(&p)?;
        model.to_checkpoint().save(&p)?;
        Ok(p)
    }

    pub fn load_bundle(&self, name: &str) -> Result<PolicyBundle> {
        PolicyBundle::load(&self.bundle_dir(name))
    }

    pub fn save_bundle(&self, name: &str, bundle: &PolicyBundle) -> Result<PathBuf> {
        let dir = self.bundle_dir(name);
        bundle.save(&dir)?;
        Ok(dir)
    }
}

fn ensure_parent(p: &Path) -> Result<()> {
    if let Some(dir) = p.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_resolve_under_root_and_paths_pass_through() {
        let s = Store::new("/data");
        assert_eq!(s.labels_path("tir2"), PathBuf::from("/data/labels/tir2.jsonl"));
        assert_eq!(s.bundle_dir("adult"), PathBuf::from("/data/bundles/adult"));
        assert_eq!(s.reward_path("./r.ckpt"), PathBuf::from("./r.ckpt"));
    }

    #[test]
    fn missing_artifacts_are_reported() {
        let tmp = tempfile::tempdir().unwrap();
        let s = Store::new(tmp.path());
        assert!(matches!(s.load_dataset("nope"), Err(Error::MissingArtifact(_))));
        assert!(matches!(s.load_labels("nope"), Err(Error::MissingArtifact(_))));
        assert!(matches!(s.load_reward("nope"), Err(Error::MissingArtifact(_))));
        assert!(matches!(s.load_bundle("nope"), Err(Error::MissingArtifact(_))));
    }
}
