use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::Td3bcConfig;
use super::to_basal;
use crate::data::Trajectory;
use crate::features::{build_state, Normalizer, STATE_DIM};
use crate::nn::{Checkpoint, Mlp};
use crate::reward::RewardModel;
use crate::rng::Rng;
use crate::sim::{Controller, PatientParams};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMeta {
    pub patient: String,
    pub max_basal: f64,
    pub dataset_hash: String,
    pub priori_seed: u64,
    pub tune_seed: Option<u64>,
    pub lambda: Option<f64>,
    pub preference: Option<String>,
    pub config: Td3bcConfig,
}

/// The deployable artifact: the safety policy, optionally a reward model and
/// a tuned policy, plus how they were made.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyBundle {
    pub priori: Mlp,
    pub normalizer: Normalizer,
    pub critics: Option<(Mlp, Mlp)>,
    pub reward: Option<RewardModel>,
    pub tuned: Option<Mlp>,
    pub meta: BundleMeta,
}

fn load_ckpt(dir: &Path, name: &str) -> Result<Option<Checkpoint>> {
    let p = dir.join(name);
    if p.exists() {
        Checkpoint::load(&p).map(Some)
    } else {
        Ok(None)
    }
}

impl PolicyBundle {
    /// The policy in force: tuned if present, else the priori.
    pub fn active(&self) -> &Mlp {
        self.tuned.as_ref().unwrap_or(&self.priori)
    }

    pub fn act_with(&self, actor: &Mlp, state: &[f64; STATE_DIM]) -> f64 {
        let z = self.normalizer.normalize(state);
        let u = actor.forward_one(&z).expect("state width")[0];
        to_basal(u, self.meta.max_basal)
    }

    /// Deterministic basal rate for a raw state vector.
    pub fn act(&self, state: &[f64; STATE_DIM]) -> f64 {
        self.act_with(self.active(), state)
    }

    pub fn act_priori(&self, state: &[f64; STATE_DIM]) -> f64 {
        self.act_with(&self.priori, state)
    }

    /// Copy with the tuned policy removed.
    pub fn priori_only(&self) -> Self {
        Self {
            tuned: None,
            reward: None,
            critics: None,
            meta: BundleMeta {
                lambda: None,
                preference: None,
                tune_seed: None,
                ..self.meta.clone()
            },
            ..self.clone()
        }
    }

    /// Writes `priori.ckpt`, `q1.ckpt`/`q2.ckpt`, `reward.ckpt` and
    /// `tuned.ckpt` when present, and `meta.json`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        Checkpoint::new(self.priori.clone(), Some(self.normalizer.clone())).save(&dir.join("priori.ckpt"))?;
        if let Some((q1, q2)) = &self.critics {
            Checkpoint::new(q1.clone(), None).save(&dir.join("q1.ckpt"))?;
            Checkpoint::new(q2.clone(), None).save(&dir.join("q2.ckpt"))?;
        }
        for stale in ["reward.ckpt", "tuned.ckpt"] {
            let p = dir.join(stale);
            if p.exists() {
                fs::remove_file(p)?;
            }
        }
        if let Some(r) = &self.reward {
            r.to_checkpoint().save(&dir.join("reward.ckpt"))?;
        }
        if let Some(t) = &self.tuned {
            Checkpoint::new(t.clone(), Some(self.normalizer.clone())).save(&dir.join("tuned.ckpt"))?;
        }
        fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&self.meta)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        if !dir.is_dir() {
            return Err(Error::MissingArtifact(format!("bundle {}", dir.display())));
        }
        let priori = load_ckpt(dir, "priori.ckpt")?.ok_or_else(|| Error::MissingArtifact(format!("{}/priori.ckpt", dir.display())))?;
        let normalizer = priori
            .normalizer
            .ok_or_else(|| Error::InvalidParameter("priori checkpoint lacks a normalizer".into()))?;
        let meta_path = dir.join("meta.json");
        let meta: BundleMeta = serde_json::from_str(
            &fs::read_to_string(&meta_path).map_err(|_| Error::MissingArtifact(meta_path.display().to_string()))?,
        )?;
        let critics = match (load_ckpt(dir, "q1.ckpt")?, load_ckpt(dir, "q2.ckpt")?) {
            (Some(a), Some(b)) => Some((a.net, b.net)),
            _ => None,
        };
        let reward = load_ckpt(dir, "reward.ckpt")?.map(RewardModel::from_checkpoint).transpose()?;
        let tuned = load_ckpt(dir, "tuned.ckpt")?.map(|c| c.net);
        Ok(Self {
            priori: priori.net,
            normalizer,
            critics,
            reward,
            tuned,
            meta,
        })
    }
}

/// Runs a bundle's active policy in the simulator.
#[derive(Debug, Clone)]
pub struct PolicyController {
    bundle: PolicyBundle,
    params: PatientParams,
}

impl PolicyController {
    pub fn new(bundle: PolicyBundle, params: PatientParams) -> Self {
        Self { bundle, params }
    }
}

impl Controller for PolicyController {
    fn basal(&mut self, history: &Trajectory, t: usize, _rng: &mut Rng) -> f64 {
        let s = build_state(history, t, &self.params);
        self.bundle.act(&s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orl::make_actor;
    use rand::Rng as _;

    fn bundle() -> PolicyBundle {
        PolicyBundle {
            priori: make_actor(&[8, 8], 1),
            normalizer: Normalizer::identity(STATE_DIM),
            critics: None,
            reward: None,
            tuned: None,
            meta: BundleMeta {
                patient: "adult".into(),
                max_basal: 0.0835,
                dataset_hash: "x".into(),
                priori_seed: 1,
                tune_seed: None,
                lambda: None,
                preference: None,
                config: Td3bcConfig::default(),
            },
        }
    }

    #[test]
    fn untuned_acts_like_priori_and_stays_in_range() {
        let mut b = bundle();
        let mut big = make_actor(&[8, 8], 2);
        let last = big.layers.len() - 1;
        big.layers[last].w.mapv_inplace(|v| v * 1e4);
        b.priori = big;
        let mut rng = crate::rng::stream(0, crate::rng::Stream::Noise);
        for _ in 0..1000 {
            let s: [f64; STATE_DIM] = std::array::from_fn(|_| 50.0 * (2.0 * rng.random::<f64>() - 1.0));
            let a = b.act(&s);
            assert!((0.0..=b.meta.max_basal).contains(&a));
            assert_eq!(a, b.act_priori(&s));
            assert_eq!(a, b.act(&s));
        }
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut b = bundle();
        b.tuned = Some(make_actor(&[8, 8], 3));
        b.meta.lambda = Some(2.5);
        b.save(dir.path()).unwrap();
        let back = PolicyBundle::load(dir.path()).unwrap();
        assert_eq!(back, b);
        let p = b.priori_only();
        p.save(dir.path()).unwrap();
        assert!(!dir.path().join("tuned.ckpt").exists());
        assert!(matches!(PolicyBundle::load(&dir.path().join("none")), Err(Error::MissingArtifact(_))));
    }
}
