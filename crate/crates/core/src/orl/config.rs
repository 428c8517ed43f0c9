use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Td3bcConfig {
    pub gamma: f64,
    pub n_steps: usize,
    pub batch_size: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    /// Target policy smoothing noise std, in action units.
    pub policy_noise: f64,
    pub noise_clip: f64,
    /// Critic steps per actor (and target) update.
    pub policy_freq: usize,
    /// Soft target update rate.
    pub tau: f64,
    /// Cloning trade-off used during pre-training.
    pub alpha: f64,
    /// Rewards are divided by this inside the critic targets.
    pub reward_scale: f64,
    pub epochs_pretrain: usize,
    pub epochs_tune: usize,
    pub hidden: Vec<usize>,
    /// Penalty for leaving the glucose range, in scaled reward units.
    pub termination_penalty: f64,
}

impl Default for Td3bcConfig {
    fn default() -> Self {
        Self {
            gamma: 0.999,
            n_steps: 10,
            batch_size: 256,
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            policy_noise: 0.2,
            noise_clip: 0.5,
            policy_freq: 2,
            tau: 5e-3,
            alpha: 2.5,
            reward_scale: 1000.0,
            epochs_pretrain: 300,
            epochs_tune: 150,
            hidden: vec![256, 256],
            termination_penalty: 100.0,
        }
    }
}

impl Td3bcConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if self.n_steps == 0 || self.batch_size == 0 || self.policy_freq == 0 {
            return bad("n_steps, batch_size and policy_freq must be >= 1");
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0 && self.tau > 0.0 && self.reward_scale > 0.0) {
            return bad("learning rates, tau and reward_scale must be positive");
        }
        if self.alpha < 0.0 || self.policy_noise < 0.0 || self.noise_clip < 0.0 {
            return bad("alpha and noise settings must be non-negative");
        }
        Ok(())
    }
}
