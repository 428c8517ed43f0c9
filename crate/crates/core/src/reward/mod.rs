//! Sketch labels, stratified reward batching and the learned reward model.

mod labels;
mod model;
mod strata;

pub use labels::{add_label_noise, LabelSet, SketchLabel};
pub use model::{relabel, train_reward_model, RewardConfig, RewardModel, RewardTrainMeta};
pub use strata::{stratum_of, StratifiedSampler};
