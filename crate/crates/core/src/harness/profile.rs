use serde::{Deserialize, Serialize};

use crate::orl::Td3bcConfig;
use crate::reward::RewardConfig;
use crate::{Error, Result};

/// Experiment scale: dataset size, label budget, seeds, evaluation length
/// and training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub name: String,
    /// Demonstrator episodes per patient in the offline dataset.
    pub train_episodes: usize,
    pub episode_days: usize,
    pub labels: usize,
    /// Seeds of repeated label/reward/tune runs.
    pub seeds: Vec<u64>,
    /// Seed of the datasets and the priori policies.
    pub base_seed: u64,
    pub eval_days: usize,
    pub eval_repeats: usize,
    /// Preference strength used when an experiment does not sweep it.
    pub lambda: f64,
    pub td3: Td3bcConfig,
    pub reward: RewardConfig,
}

impl Profile {
    /// Full-size runs: ~100k samples, 10k labels, five evaluation repeats.
    pub fn paper() -> Self {
        Self {
            name: "paper".into(),
            train_episodes: 21,
            episode_days: 10,
            labels: 10_000,
            seeds: vec![0, 1, 2],
            base_seed: 100,
            eval_days: 10,
            eval_repeats: 5,
            lambda: 2.5,
            td3: Td3bcConfig::default(),
            reward: RewardConfig::default(),
        }
    }

    /// Desk scale: ~20k samples, 2k labels, three evaluation repeats.
    pub fn desk() -> Self {
        Self {
            name: "desk".into(),
            train_episodes: 4,
            labels: 2_000,
            eval_repeats: 3,
            ..Self::paper()
        }
    }

    /// Full-size data with narrower networks, fewer epochs and desk-size
    /// label budgets, sized for a single CPU core.
    pub fn ci() -> Self {
        Self {
            name: "ci".into(),
            train_episodes: 21,
            eval_repeats: 2,
            td3: Td3bcConfig {
                hidden: vec![64, 64],
                epochs_pretrain: 60,
                epochs_tune: 30,
                ..Td3bcConfig::default()
            },
            reward: RewardConfig {
                hidden: vec![64, 64, 64],
                lr: 1e-3,
                max_epochs: 150,
                ..RewardConfig::default()
            },
            ..Self::desk()
        }
    }

    /// Minutes-scale plumbing checks: two short episodes, tiny networks.
    pub fn smoke() -> Self {
        Self {
            name: "smoke".into(),
            train_episodes: 2,
            episode_days: 2,
            labels: 400,
            seeds: vec![0],
            eval_days: 1,
            eval_repeats: 1,
            td3: Td3bcConfig {
                hidden: vec![16, 16],
                batch_size: 64,
                epochs_pretrain: 2,
                epochs_tune: 1,
                ..Td3bcConfig::default()
            },
            reward: RewardConfig {
                hidden: vec![16, 16],
                lr: 1e-3,
                max_epochs: 5,
                ..RewardConfig::default()
            },
            ..Self::paper()
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "paper" => Ok(Self::paper()),
            "desk" => Ok(Self::desk()),
            "ci" => Ok(Self::ci()),
            "smoke" => Ok(Self::smoke()),
            other => Err(Error::Config(format!("unknown profile {other:?} (paper, desk, ci, smoke)"))),
        }
    }
}
