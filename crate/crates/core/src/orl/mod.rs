//! Offline RL: TD3+BC with n-step returns.
//!
//! Pre-training clones the demonstrator while maximising a safety reward
//! (negative Magni risk). Tuning starts from that policy, trains fresh
//! critics on learned preference rewards, and replaces the cloning target
//! with the pre-trained policy, so the preference strength `λ` trades reward
//! against staying close to it. Actions live in `[-1, 1]` inside the
//! networks and map linearly onto `[0, max_basal]`.

mod bundle;
mod config;
mod data;
mod td3bc;

pub use bundle::{BundleMeta, PolicyBundle, PolicyController};
pub use config::Td3bcConfig;
pub use data::{safety_rewards, split_rewards, Batch, TrainingData};
pub use td3bc::{
    actor_loss_and_grad, actor_update, critic_targets, critic_update, make_actor, make_critic, pretrain, tune,
    ActorStats, BcAnchor, CriticStats, Networks, TrainLog,
};

/// Network action in [-1, 1] → basal rate in [0, max_basal].
pub fn to_basal(u: f64, max_basal: f64) -> f64 {
    ((u.clamp(-1.0, 1.0) + 1.0) / 2.0 * max_basal).clamp(0.0, max_basal)
}

/// Basal rate → network action.
pub fn to_unit(basal: f64, max_basal: f64) -> f64 {
    (2.0 * basal / max_basal - 1.0).clamp(-1.0, 1.0)
}
