use ndarray::{Array2, Axis};

use super::config::Td3bcConfig;
use super::to_unit;
use crate::data::{assemble, Dataset};
use crate::features::{FeatureTable, Normalizer, STATE_DIM};
use crate::metrics::magni_risk_unchecked;

/// Per-episode transition rewards `-risk(g_{t+1})` on the sensor reading,
/// with the scaled termination penalty added to the final transition of a
/// terminated episode.
pub fn safety_rewards(dataset: &Dataset, cfg: &Td3bcConfig) -> Vec<Vec<f64>> {
    dataset
        .episodes
        .iter()
        .map(|ep| {
            let n = ep.len().saturating_sub(1);
            let mut r: Vec<f64> = (0..n).map(|t| -magni_risk_unchecked(ep.glucose[t + 1])).collect();
            if ep.terminated && n > 0 {
                r[n - 1] -= cfg.termination_penalty * cfg.reward_scale;
            }
            r
        })
        .collect()
}

/// Splits one value per table row into per-episode transition rewards
/// (dropping each episode's last row).
pub fn split_rewards(table: &FeatureTable, per_row: &[f64]) -> Vec<Vec<f64>> {
    table
        .offsets
        .windows(2)
        .map(|w| per_row[w[0]..w[1].saturating_sub(1).max(w[0])].to_vec())
        .collect()
}

/// Flattened n-step transitions ready for mini-batching.
#[derive(Debug, Clone)]
pub struct TrainingData {
    /// Normalised state of every dataset row.
    pub states: Array2<f64>,
    /// Dataset action of every row in [-1, 1].
    pub actions: Vec<f64>,
    pub start_row: Vec<usize>,
    /// Scaled n-step discounted reward.
    pub returns: Vec<f64>,
    /// Row to bootstrap from (the start row itself when there is none).
    pub next_row: Vec<usize>,
    /// `γ^m` for bootstrapped views, 0 for terminal ones.
    pub discount: Vec<f64>,
    pub max_basal: f64,
    /// Scaled value of earning the mean transition reward forever,
    /// `mean(r) / ((1 - γ) · reward_scale)`; the critics' starting level.
    pub value_baseline: f64,
}

/// A mini-batch of transitions.
#[derive(Debug, Clone)]
pub struct Batch {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub returns: Vec<f64>,
    pub next_states: Array2<f64>,
    pub discount: Vec<f64>,
}

impl TrainingData {
    pub fn build(
        dataset: &Dataset,
        table: &FeatureTable,
        normalizer: &Normalizer,
        rewards: &[Vec<f64>],
        max_basal: f64,
        cfg: &Td3bcConfig,
    ) -> Self {
        let mut states = Array2::zeros((table.len(), STATE_DIM));
        for (i, s) in table.states.iter().enumerate() {
            normalizer.normalize_into(s, states.row_mut(i).as_slice_mut().expect("contiguous"));
        }
        let actions = table.actions.iter().map(|&a| to_unit(a, max_basal)).collect();
        let views = assemble(dataset, rewards, cfg.n_steps, cfg.gamma);
        let n_rewards: usize = rewards.iter().map(Vec::len).sum();
        let mean_reward = rewards.iter().flatten().sum::<f64>() / n_rewards.max(1) as f64;
        let mut out = Self {
            states,
            actions,
            start_row: Vec::with_capacity(views.len()),
            returns: Vec::with_capacity(views.len()),
            next_row: Vec::with_capacity(views.len()),
            discount: Vec::with_capacity(views.len()),
            max_basal,
            value_baseline: mean_reward / ((1.0 - cfg.gamma) * cfg.reward_scale),
        };
        for v in views {
            out.start_row.push(v.row);
            out.returns.push(v.discounted_return / cfg.reward_scale);
            match v.bootstrap_row {
                Some(r) => {
                    out.next_row.push(r);
                    out.discount.push(cfg.gamma.powi(v.horizon() as i32));
                }
                None => {
                    out.next_row.push(v.row);
                    out.discount.push(0.0);
                }
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.start_row.len()
    }

    pub fn is_empty(&self) -> bool {
        self.start_row.is_empty()
    }

    pub fn batch(&self, idx: &[usize]) -> Batch {
        let rows: Vec<usize> = idx.iter().map(|&i| self.start_row[i]).collect();
        let next: Vec<usize> = idx.iter().map(|&i| self.next_row[i]).collect();
        Batch {
            states: self.states.select(Axis(0), &rows),
            actions: Array2::from_shape_fn((idx.len(), 1), |(k, _)| self.actions[rows[k]]),
            returns: idx.iter().map(|&i| self.returns[i]).collect(),
            next_states: self.states.select(Axis(0), &next),
            discount: idx.iter().map(|&i| self.discount[i]).collect(),
        }
    }
}
