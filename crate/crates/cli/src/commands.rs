//! The pipeline verbs over a [`Store`]. The CLI and the HTTP service both
//! call these, so the two paths produce the same artifacts.

use std::fs;
use std::path::PathBuf;

use paint_core::control::{tune_pid_gains, PidTuningGrid};
use paint_core::data::Dataset;
use paint_core::harness::{
    self, evaluate_bundle, EvalConfig, Experiment, Lab, LabelSpec, Plan, Prepared, Profile, ResultTable, Summary,
};
use paint_core::orl::PolicyBundle;
use paint_core::reward::LabelSet;
use paint_core::sim::{Cohort, FaultInjector, PatientId, PatientProfile, PidGains};
use paint_core::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::store::Store;

/// Everything a verb needs besides its own flags.
#[derive(Debug, Clone)]
pub struct Ctx {
    pub store: Store,
    pub profile: Profile,
    pub cohort: Cohort,
}

impl Ctx {
    pub fn new(store: Store, profile: Profile) -> Self {
        Self {
            store,
            profile,
            cohort: Cohort::builtin(),
        }
    }

    pub fn patient(&self, id: PatientId) -> Result<&PatientProfile> {
        self.cohort.get(id)
    }

    /// The patient whose episodes make up `ds`.
    pub fn dataset_patient(&self, ds: &Dataset) -> Result<&PatientProfile> {
        let first = ds
            .episodes
            .first()
            .ok_or_else(|| Error::MissingArtifact("empty dataset".into()))?;
        if let Some(other) = ds.episodes.iter().find(|e| e.patient_id != first.patient_id) {
            return Err(Error::InvalidParameter(format!(
                "dataset mixes patients {} and {}",
                first.patient_id, other.patient_id
            )));
        }
        self.patient(first.patient_id.parse()?)
    }

    pub fn prepare(&self, dataset: &str) -> Result<(PatientProfile, Prepared)> {
        let ds = self.store.load_dataset(dataset)?;
        let patient = self.dataset_patient(&ds)?.clone();
        let prep = Prepared::new(ds, &patient)?;
        Ok((patient, prep))
    }
}

fn faults(on: bool) -> FaultInjector {
    if on {
        FaultInjector::compression_lows()
    } else {
        FaultInjector::none()
    }
}

pub fn gen_data(
    ctx: &Ctx,
    patient: PatientId,
    days: usize,
    episodes: usize,
    seed: u64,
    with_faults: bool,
    name: &str,
) -> Result<Value> {
    let profile = ctx.patient(patient)?;
    let ds = harness::generate_dataset(profile, episodes, days, seed, faults(with_faults))?;
    let dir = ctx.store.save_dataset(name, &ds)?;
    Ok(json!({
        "dataset": dir,
        "patient": patient,
        "episodes": ds.episodes.len(),
        "samples": ds.total_samples(),
        "terminated": ds.episodes.iter().filter(|e| e.terminated).count(),
        "hash": ds.hash(),
    }))
}

pub fn train_priori(ctx: &Ctx, dataset: &str, seed: u64, out: &str) -> Result<Value> {
    let (patient, prep) = ctx.prepare(dataset)?;
    let bundle = harness::train_priori(&prep, &patient, &ctx.profile.td3, seed)?;
    let dir = ctx.store.save_bundle(out, &bundle)?;
    Ok(json!({
        "bundle": dir,
        "patient": patient.params.id,
        "dataset_hash": bundle.meta.dataset_hash,
        "seed": seed,
    }))
}

pub fn auto_label(ctx: &Ctx, dataset: &str, spec: &LabelSpec, seed: u64, out: &str) -> Result<Value> {
    let (patient, prep) = ctx.prepare(dataset)?;
    let labels = harness::auto_label(&prep, &patient, spec, seed)?;
    let path = ctx.store.save_labels(out, &labels)?;
    let mut episodes: Vec<u64> = labels.labels().iter().map(|l| l.episode_id).collect();
    episodes.dedup();
    Ok(json!({
        "labels": path,
        "count": labels.len(),
        "episodes": episodes,
        "preference": spec.preference.name(),
    }))
}

pub fn train_reward(ctx: &Ctx, dataset: &str, labels: &LabelSet, seed: u64, out: &str) -> Result<Value> {
    let (_, prep) = ctx.prepare(dataset)?;
    let model = harness::train_reward(&prep, labels, &ctx.profile.reward, seed)?;
    let path = ctx.store.save_reward(out, &model)?;
    let meta = model.meta.as_ref();
    Ok(json!({
        "reward": path,
        "labels": labels.len(),
        "epochs": meta.map(|m| m.epochs_run),
        "best_val_loss": meta.map(|m| m.best_val_loss),
    }))
}

#[allow(clippy::too_many_arguments)]
pub fn tune(
    ctx: &Ctx,
    bundle: &str,
    dataset: &str,
    reward: &str,
    preference: Option<String>,
    lambda: f64,
    seed: u64,
    out: &str,
) -> Result<Value> {
    let priori = ctx.store.load_bundle(bundle)?;
    let model = ctx.store.load_reward(reward)?;
    let (patient, prep) = ctx.prepare(dataset)?;
    if priori.meta.patient != patient.params.id.as_str() {
        return Err(Error::InvalidParameter(format!(
            "bundle is for {} but the dataset is {}",
            priori.meta.patient, patient.params.id
        )));
    }
    if priori.meta.dataset_hash != prep.dataset.hash() {
        log::warn!("tuning on a dataset other than the one the priori was trained on");
    }
    let mut tuned = harness::tune_bundle(&prep, &priori, &model, lambda, &ctx.profile.td3, seed)?;
    tuned.meta.preference = preference;
    let dir = ctx.store.save_bundle(out, &tuned)?;
    Ok(json!({ "bundle": dir, "lambda": lambda, "seed": seed }))
}

/// Before/after metrics of a tuned bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub bundle: String,
    pub patient: String,
    pub lambda: Option<f64>,
    pub preference: Option<String>,
    pub eval: EvalConfig,
    pub priori: Summary,
    pub tuned: Option<Summary>,
    /// Tuned minus priori.
    pub delta: Option<Delta>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Delta {
    pub magni_total: f64,
    pub mean_glucose: f64,
    pub tir_pct: f64,
    pub tbr_pct: f64,
    pub cov_pct: f64,
    pub mean_basal: f64,
}

impl Delta {
    pub fn between(before: &Summary, after: &Summary) -> Self {
        Self {
            magni_total: after.magni_total - before.magni_total,
            mean_glucose: after.mean_glucose - before.mean_glucose,
            tir_pct: after.tir_pct - before.tir_pct,
            tbr_pct: after.tbr_pct - before.tbr_pct,
            cov_pct: after.cov_pct - before.cov_pct,
            mean_basal: after.mean_basal - before.mean_basal,
        }
    }
}

/// Evaluates the bundle's priori and, when present, its tuned policy under
/// the same seeds.
pub fn report(ctx: &Ctx, name: &str, bundle: &PolicyBundle, eval: &EvalConfig) -> Result<Report> {
    let id: PatientId = bundle.meta.patient.parse()?;
    let patient = ctx.patient(id)?;
    let priori = Summary::of(&evaluate_bundle(&bundle.priori_only(), patient, eval)?);
    let tuned = match bundle.tuned {
        Some(_) => Some(Summary::of(&evaluate_bundle(bundle, patient, eval)?)),
        None => None,
    };
    Ok(Report {
        bundle: name.into(),
        patient: id.to_string(),
        lambda: bundle.meta.lambda,
        preference: bundle.meta.preference.clone(),
        eval: eval.clone(),
        priori,
        delta: tuned.as_ref().map(|t| Delta::between(&priori, t)),
        tuned,
    })
}

/// Reports of every evaluation run of the active policy, plus the paired
/// summary.
pub fn eval(ctx: &Ctx, name: &str, eval: &EvalConfig, priori_only: bool) -> Result<Value> {
    let mut bundle = ctx.store.load_bundle(name)?;
    if priori_only {
        bundle = bundle.priori_only();
    }
    let id: PatientId = bundle.meta.patient.parse()?;
    let reports = evaluate_bundle(&bundle, ctx.patient(id)?, eval)?;
    let summary = report(ctx, name, &bundle, eval)?;
    Ok(json!({
        "bundle": name,
        "policy": if bundle.tuned.is_some() { "tuned" } else { "priori" },
        "reports": reports,
        "report": summary,
    }))
}

/// Runs one experiment and writes `<name>.jsonl` and `<name>.txt` under the
/// store's results directory.
pub fn experiment(
    ctx: &Ctx,
    exp: Experiment,
    patients: Option<Vec<PatientId>>,
    plan: Plan,
) -> Result<(ResultTable, Vec<PathBuf>)> {
    let lab = Lab::new(ctx.profile.clone(), ctx.cohort.clone())
        .with_patients(patients.unwrap_or_else(|| PatientId::ALL.to_vec()))
        .with_plan(plan);
    let table = lab.run(exp)?;
    let dir = ctx.store.results_dir();
    fs::create_dir_all(&dir)?;
    let jsonl = dir.join(format!("{exp}.jsonl"));
    let txt = dir.join(format!("{exp}.txt"));
    fs::write(&jsonl, table.to_jsonl()?)?;
    fs::write(&txt, table.render())?;
    Ok((table, vec![jsonl, txt]))
}

pub fn tune_pid(ctx: &Ctx, patient: PatientId, days: usize, seed: u64) -> Result<Value> {
    let profile = ctx.patient(patient)?;
    let grid = PidTuningGrid {
        days,
        ..PidTuningGrid::default()
    };
    let (gains, risk): (PidGains, f64) = tune_pid_gains(profile, &grid, seed)?;
    Ok(json!({
        "patient": patient,
        "gains": gains,
        "mean_risk": risk,
        "stored": profile.pid,
    }))
}
