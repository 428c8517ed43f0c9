use std::collections::BTreeSet;

use ndarray::Array2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::labels::LabelSet;
use super::strata::StratifiedSampler;
use crate::data::Dataset;
use crate::features::{FeatureTable, Normalizer, STATE_DIM};
use crate::nn::{Activation, Adam, Checkpoint, Mlp};
use crate::rng::{derive, stream, Stream};
use crate::{Error, Result};

/// Reward network input width: the state plus the basal action.
pub const REWARD_INPUT_DIM: usize = STATE_DIM + 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub lr: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub strata: usize,
    pub hidden: Vec<usize>,
    /// Fraction of label blocks held out for early stopping.
    pub val_frac: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub min_labels: usize,
    /// Labels are split into train and validation in blocks of this many
    /// consecutive steps of one episode, so neighbouring samples never
    /// straddle the split.
    pub block_steps: usize,
    pub seed: u64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            lr: 4e-5,
            max_epochs: 500,
            batch_size: 128,
            strata: 10,
            hidden: vec![256, 256, 256],
            val_frac: 0.1,
            patience: 25,
            min_labels: 50,
            block_steps: 80,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardTrainMeta {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub final_train_loss: f64,
    pub n_train: usize,
    pub n_val: usize,
    pub strata: usize,
    /// Validation loss after every epoch.
    pub val_curve: Vec<f64>,
}

/// `r̂(s, a)`: a regressor from normalised state and basal to a reward.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardModel {
    pub net: Mlp,
    pub normalizer: Normalizer,
    pub meta: Option<RewardTrainMeta>,
}

impl RewardModel {
    pub fn new(normalizer: Normalizer, hidden: &[usize], seed: u64) -> Self {
        let mut dims = vec![REWARD_INPUT_DIM];
        dims.extend_from_slice(hidden);
        dims.push(1);
        Self {
            net: Mlp::new(&dims, Activation::Relu, Activation::Identity, 1.0, seed),
            normalizer,
            meta: None,
        }
    }

    /// Fits the input normaliser on every (state, action) row of a table.
    pub fn fit_normalizer(table: &FeatureTable) -> Result<Normalizer> {
        let rows: Vec<Vec<f64>> = (0..table.len()).map(|i| input_row(&table.states[i], table.actions[i])).collect();
        Normalizer::fit(&rows)
    }

    fn inputs(&self, rows: impl ExactSizeIterator<Item = ([f64; STATE_DIM], f64)>) -> Array2<f64> {
        let n = rows.len();
        let mut x = Array2::zeros((n, REWARD_INPUT_DIM));
        for (i, (s, a)) in rows.enumerate() {
            let raw = input_row(&s, a);
            let mut row = x.row_mut(i);
            self.normalizer.normalize_into(&raw, row.as_slice_mut().expect("contiguous row"));
        }
        x
    }

    /// Raw (unclamped) predictions for table rows.
    pub fn predict_rows(&self, table: &FeatureTable, rows: &[usize]) -> Vec<f64> {
        let mut out = Vec::with_capacity(rows.len());
        for chunk in rows.chunks(4096) {
            let x = self.inputs(chunk.iter().map(|&r| (table.states[r], table.actions[r])));
            out.extend(self.net.forward(&x).expect("reward input width").iter());
        }
        out
    }

    pub fn predict(&self, state: &[f64; STATE_DIM], action: f64) -> f64 {
        let x = self.inputs(std::iter::once((*state, action)));
        self.net.forward(&x).expect("reward input width")[[0, 0]]
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::new(self.net.clone(), Some(self.normalizer.clone()))
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        let normalizer = ckpt
            .normalizer
            .ok_or_else(|| Error::InvalidParameter("reward checkpoint lacks a normalizer".into()))?;
        if ckpt.net.in_dim() != REWARD_INPUT_DIM || normalizer.dim() != REWARD_INPUT_DIM {
            return Err(Error::DimensionMismatch {
                expected: REWARD_INPUT_DIM,
                got: ckpt.net.in_dim(),
            });
        }
        Ok(Self {
            net: ckpt.net,
            normalizer,
            meta: None,
        })
    }
}

fn input_row(s: &[f64; STATE_DIM], a: f64) -> Vec<f64> {
    let mut v = s.to_vec();
    v.push(a);
    v
}

fn mse(pred: &Array2<f64>, target: &[f64]) -> f64 {
    pred.iter().zip(target).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / target.len() as f64
}

/// Trains `r̂` on sketch labels by minimising mean-squared error with
/// stratified mini-batches and Adam, early-stopping on held-out label
/// blocks. The weights of the best validation epoch are returned.
pub fn train_reward_model(
    dataset: &Dataset,
    table: &FeatureTable,
    labels: &LabelSet,
    cfg: &RewardConfig,
) -> Result<RewardModel> {
    if labels.len() < cfg.min_labels {
        return Err(Error::InsufficientLabels {
            got: labels.len(),
            min: cfg.min_labels,
        });
    }
    labels.validate_against(dataset)?;
    let rows: Vec<usize> = labels
        .labels()
        .iter()
        .map(|l| dataset.row_of(l.episode_id, l.t).expect("validated"))
        .collect();

    // hold out whole blocks of consecutive labels
    let block_of = |i: usize| {
        let l = &labels.labels()[i];
        (l.episode_id, l.t / cfg.block_steps.max(1))
    };
    let blocks: BTreeSet<(u64, usize)> = (0..labels.len()).map(block_of).collect();
    let mut blocks: Vec<_> = blocks.into_iter().collect();
    let mut split_rng = stream(cfg.seed, Stream::Labels);
    blocks.shuffle(&mut split_rng);
    let (train_idx, val_idx): (Vec<usize>, Vec<usize>) = if blocks.len() >= 2 {
        let n_val = ((blocks.len() as f64 * cfg.val_frac).round() as usize).clamp(1, blocks.len() - 1);
        let held: BTreeSet<_> = blocks[..n_val].iter().copied().collect();
        (0..labels.len()).partition(|&i| !held.contains(&block_of(i)))
    } else {
        let mut idx: Vec<usize> = (0..labels.len()).collect();
        idx.shuffle(&mut split_rng);
        let n_val = ((idx.len() as f64 * cfg.val_frac).round() as usize).max(1);
        let val = idx[..n_val].to_vec();
        let mut train = idx[n_val..].to_vec();
        train.sort_unstable();
        (train, val)
    };

    let normalizer = RewardModel::fit_normalizer(table)?;
    let mut model = RewardModel::new(normalizer, &cfg.hidden, derive(cfg.seed, 0x5EED));
    let rewards = labels.rewards();
    let train_rewards: Vec<f64> = train_idx.iter().map(|&i| rewards[i]).collect();
    let mut sampler = StratifiedSampler::new(&train_rewards, cfg.strata, stream(cfg.seed, Stream::Sampling))?;

    let x_val = model.inputs(val_idx.iter().map(|&i| (table.states[rows[i]], table.actions[rows[i]])));
    let y_val: Vec<f64> = val_idx.iter().map(|&i| rewards[i]).collect();
    let x_train = model.inputs(train_idx.iter().map(|&i| (table.states[rows[i]], table.actions[rows[i]])));

    let mut opt = Adam::new(&model.net, cfg.lr);
    let batches_per_epoch = train_idx.len().div_ceil(cfg.batch_size).max(1);
    let mut best = (f64::INFINITY, model.net.clone(), 0usize);
    let mut curve = Vec::new();
    let mut train_loss = f64::NAN;
    let mut epochs_run = 0;
    for epoch in 0..cfg.max_epochs {
        epochs_run = epoch + 1;
        let mut acc = 0.0;
        for _ in 0..batches_per_epoch {
            let pick = sampler.batch(cfg.batch_size);
            let x = x_train.select(ndarray::Axis(0), &pick);
            let y: Vec<f64> = pick.iter().map(|&j| train_rewards[j]).collect();
            let cache = model.net.forward_cached(&x)?;
            let pred = cache.output();
            acc += mse(pred, &y);
            let mut grad = pred.clone();
            let k = 2.0 / y.len() as f64;
            for (g, t) in grad.iter_mut().zip(&y) {
                *g = k * (*g - t);
            }
            let (g, _) = model.net.backward(&cache, &grad);
            opt.update(&mut model.net, &g);
        }
        train_loss = acc / batches_per_epoch as f64;
        let val = mse(&model.net.forward(&x_val)?, &y_val);
        curve.push(val);
        if val < best.0 {
            best = (val, model.net.clone(), epoch);
        } else if epoch - best.2 >= cfg.patience {
            break;
        }
    }
    model.net = best.1;
    model.meta = Some(RewardTrainMeta {
        epochs_run,
        best_epoch: best.2,
        best_val_loss: best.0,
        final_train_loss: train_loss,
        n_train: train_idx.len(),
        n_val: val_idx.len(),
        strata: cfg.strata,
        val_curve: curve,
    });
    log::debug!("reward model: {} epochs, best val {:.5} at {}", epochs_run, best.0, best.2);
    Ok(model)
}

/// `clamp(r̂(s, a), -1, 1)` for every row of the table.
pub fn relabel(table: &FeatureTable, model: &RewardModel) -> Vec<f64> {
    let rows: Vec<usize> = (0..table.len()).collect();
    model.predict_rows(table, &rows).into_iter().map(|r| r.clamp(-1.0, 1.0)).collect()
}
