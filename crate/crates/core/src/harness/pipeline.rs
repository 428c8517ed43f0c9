use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::{BolusConfig, PidConfig, PidController};
use crate::data::Dataset;
use crate::features::{FeatureTable, Normalizer};
use crate::metrics::{score, EpisodeReport, ScoreWindows};
use crate::orl::{pretrain, safety_rewards, split_rewards, tune, BundleMeta, PolicyBundle, PolicyController, TrainingData};
use crate::preferences::{label_segments, nominal_mealtimes, pick_segments, Corruption, Preference};
use crate::reward::{relabel, train_reward_model, LabelSet, RewardConfig, RewardModel};
use crate::rng::{derive, stream, Stream};
use crate::sim::{run_episode, Controller, EpisodeConfig, FaultInjector, PatientProfile, PidGains};
use crate::orl::Td3bcConfig;
use crate::Result;

/// Standard closed-loop environment: the patient's meal plan, the mealtime
/// bolus calculator aimed at the PID setpoint, default CGM noise.
pub fn environment(profile: &PatientProfile, days: usize, faults: FaultInjector) -> EpisodeConfig {
    let mut cfg = EpisodeConfig::new(days, profile.meals.clone());
    cfg.bolus = Some(BolusConfig::for_patient(&profile.params, profile.pid.g_targ_mgdl));
    cfg.faults = faults;
    cfg
}

/// Offline dataset from the noisy PID demonstrator. Episode `i` uses seed
/// `derive(seed, i)` and episode id `i`.
pub fn generate_dataset(
    profile: &PatientProfile,
    episodes: usize,
    days: usize,
    seed: u64,
    faults: FaultInjector,
) -> Result<Dataset> {
    let env = environment(profile, days, faults);
    let eps = (0..episodes as u64)
        .into_par_iter()
        .map(|i| {
            let mut ctrl = PidController::new(PidConfig::demonstrator(&profile.params, profile.pid));
            run_episode(&profile.params, &mut ctrl, &env, derive(seed, i), i)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset::new(eps))
}

/// Dataset plus the features every training phase needs.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub dataset: Dataset,
    pub table: FeatureTable,
    pub normalizer: Normalizer,
}

impl Prepared {
    pub fn new(dataset: Dataset, profile: &PatientProfile) -> Result<Self> {
        let table = FeatureTable::build(&dataset, &profile.params);
        let normalizer = Normalizer::fit(&table.states)?;
        Ok(Self {
            dataset,
            table,
            normalizer,
        })
    }
}

/// Phase 1: safety policy from the demonstrator data.
pub fn train_priori(prep: &Prepared, profile: &PatientProfile, cfg: &Td3bcConfig, seed: u64) -> Result<PolicyBundle> {
    let max_basal = profile.params.max_basal();
    let rewards = safety_rewards(&prep.dataset, cfg);
    let data = TrainingData::build(&prep.dataset, &prep.table, &prep.normalizer, &rewards, max_basal, cfg);
    let (nets, _log) = pretrain(&data, cfg, seed)?;
    Ok(PolicyBundle {
        priori: nets.actor,
        normalizer: prep.normalizer.clone(),
        critics: Some((nets.q1, nets.q2)),
        reward: None,
        tuned: None,
        meta: BundleMeta {
            patient: profile.params.id.to_string(),
            max_basal,
            dataset_hash: prep.dataset.hash(),
            priori_seed: seed,
            tune_seed: None,
            lambda: None,
            preference: None,
            config: cfg.clone(),
        },
    })
}

/// How the simulated patient labels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelSpec {
    pub preference: Preference,
    pub samples: usize,
    pub corruption: Corruption,
    /// Gaussian label noise as a multiple of the label std.
    pub noise_multiple: f64,
}

impl LabelSpec {
    pub fn new(preference: Preference, samples: usize) -> Self {
        Self {
            preference,
            samples,
            corruption: Corruption::default(),
            noise_multiple: 0.0,
        }
    }
}

/// Simulated sketching over contiguous segments of the dataset.
pub fn auto_label(prep: &Prepared, profile: &PatientProfile, spec: &LabelSpec, seed: u64) -> Result<LabelSet> {
    let mut rng = stream(seed, Stream::Labels);
    let segs = pick_segments(&prep.dataset, spec.samples, &mut rng)?;
    let labels = label_segments(
        spec.preference,
        &prep.dataset,
        &segs,
        &nominal_mealtimes(&profile.meals),
        spec.corruption,
        &mut rng,
    )?;
    if spec.noise_multiple > 0.0 {
        Ok(crate::reward::add_label_noise(&labels, spec.noise_multiple, &mut rng))
    } else {
        Ok(labels)
    }
}

pub fn train_reward(prep: &Prepared, labels: &LabelSet, cfg: &RewardConfig, seed: u64) -> Result<RewardModel> {
    let cfg = RewardConfig { seed, ..cfg.clone() };
    train_reward_model(&prep.dataset, &prep.table, labels, &cfg)
}

/// Phase 2: relabel the dataset with `reward` and tune the bundle's priori.
pub fn tune_bundle(
    prep: &Prepared,
    bundle: &PolicyBundle,
    reward: &RewardModel,
    lambda: f64,
    cfg: &Td3bcConfig,
    seed: u64,
) -> Result<PolicyBundle> {
    let per_row = relabel(&prep.table, reward);
    let rewards = split_rewards(&prep.table, &per_row);
    let data = TrainingData::build(&prep.dataset, &prep.table, &bundle.normalizer, &rewards, bundle.meta.max_basal, cfg);
    let (nets, _log) = tune(&data, &bundle.priori, lambda, cfg, seed)?;
    let mut out = bundle.clone();
    out.tuned = Some(nets.actor);
    out.critics = Some((nets.q1, nets.q2));
    out.reward = Some(reward.clone());
    out.meta.lambda = Some(lambda);
    out.meta.tune_seed = Some(seed);
    out.meta.config = cfg.clone();
    Ok(out)
}

/// Evaluation protocol: `repeats` closed-loop runs of `days` days with seeds
/// derived from `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub days: usize,
    pub repeats: usize,
    pub seed: u64,
    pub faults: FaultInjector,
    pub windows: ScoreWindows,
}

impl EvalConfig {
    pub fn new(days: usize, repeats: usize, seed: u64) -> Self {
        Self {
            days,
            repeats,
            seed,
            faults: FaultInjector::none(),
            windows: ScoreWindows::default(),
        }
    }

    fn run_seed(&self, r: usize) -> u64 {
        derive(self.seed, 0xE7A1_0000 + r as u64)
    }
}

/// Scores `repeats` runs of the controller built by `make`.
pub fn evaluate<C, F>(profile: &PatientProfile, eval: &EvalConfig, make: F) -> Result<Vec<EpisodeReport>>
where
    C: Controller,
    F: Fn() -> C + Sync,
{
    let env = environment(profile, eval.days, eval.faults.clone());
    (0..eval.repeats)
        .into_par_iter()
        .map(|r| {
            let mut ctrl = make();
            let tr = run_episode(&profile.params, &mut ctrl, &env, eval.run_seed(r), r as u64)?;
            score(&tr, &eval.windows)
        })
        .collect()
}

pub fn evaluate_bundle(bundle: &PolicyBundle, profile: &PatientProfile, eval: &EvalConfig) -> Result<Vec<EpisodeReport>> {
    evaluate(profile, eval, || PolicyController::new(bundle.clone(), profile.params.clone()))
}

/// The noise-free PID with the given gains, under the same protocol.
pub fn evaluate_pid(profile: &PatientProfile, gains: PidGains, eval: &EvalConfig) -> Result<Vec<EpisodeReport>> {
    evaluate(profile, eval, || PidController::new(PidConfig::noise_free(&profile.params, gains)))
}

/// A tuned bundle and its priori under identical evaluation seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedReport {
    pub priori: Vec<EpisodeReport>,
    pub tuned: Vec<EpisodeReport>,
}

pub fn evaluate_paired(bundle: &PolicyBundle, profile: &PatientProfile, eval: &EvalConfig) -> Result<PairedReport> {
    Ok(PairedReport {
        priori: evaluate_bundle(&bundle.priori_only(), profile, eval)?,
        tuned: evaluate_bundle(bundle, profile, eval)?,
    })
}
