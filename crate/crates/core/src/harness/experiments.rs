use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pipeline::{
    auto_label, evaluate_bundle, evaluate_pid, generate_dataset, train_priori, train_reward, tune_bundle, EvalConfig,
    LabelSpec, Prepared,
};
use super::Profile;
use crate::metrics::{median, EpisodeReport};
use crate::orl::PolicyBundle;
use crate::preferences::{Corruption, Preference};
use crate::rng::derive;
use crate::sim::{Cohort, FaultInjector, PatientId, PatientProfile};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    BgTargets,
    CommonGoals,
    Mealtimes,
    Compression,
    SampleEfficiency,
    CorruptLabels,
    LabelNoise,
    DiverseStrategies,
}

impl Experiment {
    pub const ALL: [Experiment; 8] = [
        Experiment::BgTargets,
        Experiment::CommonGoals,
        Experiment::Mealtimes,
        Experiment::Compression,
        Experiment::SampleEfficiency,
        Experiment::CorruptLabels,
        Experiment::LabelNoise,
        Experiment::DiverseStrategies,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::BgTargets => "bg-targets",
            Experiment::CommonGoals => "common-goals",
            Experiment::Mealtimes => "mealtimes",
            Experiment::Compression => "compression",
            Experiment::SampleEfficiency => "sample-efficiency",
            Experiment::CorruptLabels => "corrupt-labels",
            Experiment::LabelNoise => "label-noise",
            Experiment::DiverseStrategies => "diverse-strategies",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::UnknownExperiment(s.into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    MagniTotal,
    MeanGlucose,
    #[serde(rename = "tir_pct")]
    Tir,
    #[serde(rename = "tbr_pct")]
    Tbr,
    #[serde(rename = "cov_pct")]
    Cov,
    #[serde(rename = "post_meal_tir_pct")]
    PostMealTir,
    #[serde(rename = "post_event_cov_pct")]
    PostEventCov,
    PostEventBasal,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::MagniTotal => "magni_total",
            Metric::MeanGlucose => "mean_glucose",
            Metric::Tir => "tir_pct",
            Metric::Tbr => "tbr_pct",
            Metric::Cov => "cov_pct",
            Metric::PostMealTir => "post_meal_tir_pct",
            Metric::PostEventCov => "post_event_cov_pct",
            Metric::PostEventBasal => "post_event_basal",
        }
    }
}

/// Metric means over the evaluation repeats of one controller. Event
/// windows average over the repeats that had the event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub magni_total: f64,
    pub mean_glucose: f64,
    pub tir_pct: f64,
    pub tbr_pct: f64,
    pub cov_pct: f64,
    pub mean_basal: f64,
    pub post_meal_tir_pct: Option<f64>,
    pub post_event_cov_pct: Option<f64>,
    pub post_event_basal: Option<f64>,
    pub terminated: usize,
}

fn mean_of(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (n, s) = xs.fold((0usize, 0.0), |(n, s), x| (n + 1, s + x));
    (n > 0).then(|| s / n as f64)
}

impl Summary {
    pub fn of(reports: &[EpisodeReport]) -> Self {
        let m = |f: fn(&EpisodeReport) -> f64| mean_of(reports.iter().map(f)).unwrap_or(f64::NAN);
        let o = |f: fn(&EpisodeReport) -> Option<f64>| mean_of(reports.iter().filter_map(f));
        Self {
            magni_total: m(|r| r.magni_total),
            mean_glucose: m(|r| r.mean_glucose),
            tir_pct: m(|r| r.tir_pct),
            tbr_pct: m(|r| r.tbr_pct),
            cov_pct: m(|r| r.cov_pct),
            mean_basal: m(|r| r.mean_basal),
            post_meal_tir_pct: o(|r| r.post_meal_tir_pct),
            post_event_cov_pct: o(|r| r.post_event_cov_pct),
            post_event_basal: o(|r| r.post_event_basal),
            terminated: reports.iter().filter(|r| r.terminated).count(),
        }
    }

    pub fn metric(&self, m: Metric) -> Option<f64> {
        match m {
            Metric::MagniTotal => Some(self.magni_total),
            Metric::MeanGlucose => Some(self.mean_glucose),
            Metric::Tir => Some(self.tir_pct),
            Metric::Tbr => Some(self.tbr_pct),
            Metric::Cov => Some(self.cov_pct),
            Metric::PostMealTir => self.post_meal_tir_pct,
            Metric::PostEventCov => self.post_event_cov_pct,
            Metric::PostEventBasal => self.post_event_basal,
        }
    }
}

/// A patient goal: the labelling strategy used to express it and the metric
/// it should move.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Goal {
    pub name: String,
    pub preference: Preference,
    pub metric: Metric,
    pub increase: bool,
}

impl Goal {
    pub fn new(name: &str, preference: Preference, metric: Metric, increase: bool) -> Self {
        Self {
            name: name.into(),
            preference,
            metric,
            increase,
        }
    }

    /// Raise TIR, lower TBR, lower CoV.
    pub fn common() -> Vec<Goal> {
        vec![
            Goal::new("Raise TIR", Preference::Tir2, Metric::Tir, true),
            Goal::new("Lower TBR", Preference::Tbr2, Metric::Tbr, false),
            Goal::new("Lower CoV", Preference::Cov1, Metric::Cov, false),
        ]
    }

    /// Change in the wanted direction (positive is better).
    pub fn improvement(&self, change: f64) -> f64 {
        if self.increase {
            change
        } else {
            -change
        }
    }

    /// The goal a labelling strategy serves.
    pub fn for_strategy(p: Preference) -> Option<Goal> {
        let name = p.name();
        let (goal, metric, inc) = match p {
            Preference::Tir1 | Preference::Tir2 | Preference::Tir3 => ("Raise TIR", Metric::Tir, true),
            Preference::Tbr1 | Preference::Tbr2 | Preference::Tbr3 => ("Lower TBR", Metric::Tbr, false),
            Preference::Cov1 | Preference::Cov2 | Preference::Cov3 => ("Lower CoV", Metric::Cov, false),
            _ => return None,
        };
        Some(Goal::new(&format!("{goal} ({name})"), p, metric, inc))
    }
}

/// Condition lists swept by the experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    /// Targets tuned towards in `bg-targets`.
    pub targets: Vec<f64>,
    /// PID setpoints evaluated for the baseline.
    pub pid_targets: Vec<f64>,
    pub goals: Vec<Goal>,
    pub label_counts: Vec<usize>,
    pub negate_fracs: Vec<f64>,
    pub noise_multiples: Vec<f64>,
    /// PID benchmark candidates must keep the Magni total above this per
    /// ten days of evaluation.
    pub pid_risk_floor_per_10d: f64,
    /// `bg-targets` tolerance around the PID mean glucose.
    pub target_tolerance: f64,
}

impl Default for Plan {
    fn default() -> Self {
        Self {
            targets: vec![100.0, 120.0, 140.0, 160.0, 180.0, 200.0],
            pid_targets: (0..=20).map(|i| 100.0 + 5.0 * i as f64).collect(),
            goals: Goal::common(),
            label_counts: vec![250, 1_000, 5_000, 10_000, 50_000, 90_000],
            negate_fracs: vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
            noise_multiples: vec![0.0, 1.0, 3.0, 5.0, 10.0],
            pid_risk_floor_per_10d: -35_000.0,
            target_tolerance: 5.0,
        }
    }
}

/// One evaluated controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub experiment: Experiment,
    pub condition: String,
    pub patient: PatientId,
    pub seed: Option<u64>,
    /// `pid` or `paint`.
    pub controller: String,
    pub preference: Option<String>,
    pub lambda: Option<f64>,
    /// The priori under the same evaluation seeds, for tuned runs.
    pub priori: Option<Summary>,
    pub result: Summary,
}

/// Medians of one metric over (patient × seed) runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub experiment: Experiment,
    pub condition: String,
    /// A patient id, or `all` for the whole cohort.
    pub patient: String,
    pub metric: Metric,
    pub runs: usize,
    pub priori: Option<f64>,
    pub value: f64,
    /// Median paired change, tuned minus priori.
    pub change: Option<f64>,
    /// PID reference: a value for targets, a change for goals.
    pub benchmark: Option<f64>,
    /// The change moved the metric the intended way.
    pub improved: Option<bool>,
    pub achieved: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub experiment: Experiment,
    pub profile: String,
    pub runs: Vec<RunRecord>,
    pub summary: Vec<SummaryRow>,
}

#[derive(Serialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Line<'a> {
    Run(&'a RunRecord),
    Summary(&'a SummaryRow),
}

fn fmt_opt(v: Option<f64>, prec: usize) -> String {
    v.map(|x| format!("{x:.prec$}")).unwrap_or_else(|| "-".into())
}

fn fmt_flag(v: Option<bool>) -> &'static str {
    match v {
        Some(true) => "yes",
        Some(false) => "no",
        None => "-",
    }
}

impl ResultTable {
    /// One JSON object per line: every run, then every summary row.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.runs {
            out.push_str(&serde_json::to_string(&Line::Run(r))?);
            out.push('\n');
        }
        for s in &self.summary {
            out.push_str(&serde_json::to_string(&Line::Summary(s))?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn row(&self, condition: &str, patient: &str, metric: Metric) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|r| r.condition == condition && r.patient == patient && r.metric == metric)
    }

    /// Summary rows as an aligned text table.
    pub fn render(&self) -> String {
        let header = [
            "condition", "patient", "metric", "runs", "priori", "value", "change", "benchmark", "improved", "achieved",
        ];
        let mut rows: Vec<[String; 10]> = vec![header.map(String::from)];
        for r in &self.summary {
            let prec = if r.metric == Metric::PostEventBasal { 4 } else { 1 };
            rows.push([
                r.condition.clone(),
                r.patient.clone(),
                r.metric.name().into(),
                r.runs.to_string(),
                fmt_opt(r.priori, prec),
                fmt_opt(Some(r.value), prec),
                fmt_opt(r.change, prec),
                fmt_opt(r.benchmark, prec),
                fmt_flag(r.improved).into(),
                fmt_flag(r.achieved).into(),
            ]);
        }
        let widths: Vec<usize> = (0..10).map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0)).collect();
        let mut out = format!("{} ({} profile)\n", self.experiment, self.profile);
        for (i, r) in rows.iter().enumerate() {
            let cells: Vec<String> = r
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(c, (v, w))| if c < 3 { format!("{v:<w$}") } else { format!("{v:>w$}") })
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
            if i == 0 {
                out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
                out.push('\n');
            }
        }
        out
    }
}

/// Dataset, priori and its evaluation for one patient and fault setting.
#[derive(Debug)]
pub struct Stage {
    pub patient: PatientProfile,
    pub prep: Prepared,
    pub priori: PolicyBundle,
    pub eval: EvalConfig,
    pub priori_reports: Vec<EpisodeReport>,
}

/// One preference-tuning run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub patient: PatientId,
    /// Compression lows in both the dataset and the evaluation.
    pub faults: bool,
    pub labels: LabelSpec,
    pub seed: u64,
    pub lambda: f64,
}

#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub bundle: PolicyBundle,
    pub priori: Vec<EpisodeReport>,
    pub tuned: Vec<EpisodeReport>,
}

/// Shared experiment state: one cached [`Stage`] per patient and fault
/// setting, so every tuned policy is compared with the same priori under
/// the same evaluation seeds.
#[derive(Debug)]
pub struct Lab {
    pub profile: Profile,
    pub plan: Plan,
    pub patients: Vec<PatientId>,
    cohort: Cohort,
    stages: Mutex<HashMap<(PatientId, bool), Arc<Stage>>>,
}

fn patient_index(id: PatientId) -> u64 {
    PatientId::ALL.iter().position(|&p| p == id).unwrap_or(0) as u64
}

fn fault_injector(faults: bool) -> FaultInjector {
    if faults {
        FaultInjector::compression_lows()
    } else {
        FaultInjector::none()
    }
}

impl Lab {
    pub fn new(profile: Profile, cohort: Cohort) -> Self {
        Self {
            profile,
            plan: Plan::default(),
            patients: PatientId::ALL.to_vec(),
            cohort,
            stages: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_patients(mut self, patients: Vec<PatientId>) -> Self {
        self.patients = patients;
        self
    }

    pub fn with_plan(mut self, plan: Plan) -> Self {
        self.plan = plan;
        self
    }

    pub fn patient(&self, id: PatientId) -> Result<&PatientProfile> {
        self.cohort.get(id)
    }

    pub fn eval_config(&self, id: PatientId, faults: bool) -> EvalConfig {
        let mut eval = EvalConfig::new(
            self.profile.eval_days,
            self.profile.eval_repeats,
            derive(self.profile.base_seed, 0xE7A1 + patient_index(id)),
        );
        eval.faults = fault_injector(faults);
        eval
    }

    /// Builds (once) the dataset and priori for `id`.
    pub fn stage(&self, id: PatientId, faults: bool) -> Result<Arc<Stage>> {
        let mut stages = self.stages.lock().expect("stage cache poisoned");
        if let Some(s) = stages.get(&(id, faults)) {
            return Ok(s.clone());
        }
        let patient = self.patient(id)?.clone();
        let p = &self.profile;
        let salt = 2 * patient_index(id) + faults as u64;
        log::info!("building {id} stage (faults: {faults})");
        let dataset = generate_dataset(
            &patient,
            p.train_episodes,
            p.episode_days,
            derive(p.base_seed, salt),
            fault_injector(faults),
        )?;
        let prep = Prepared::new(dataset, &patient)?;
        let priori = train_priori(&prep, &patient, &p.td3, derive(p.base_seed, 0x5EED + salt))?;
        let eval = self.eval_config(id, faults);
        let priori_reports = evaluate_bundle(&priori, &patient, &eval)?;
        let stage = Arc::new(Stage {
            patient,
            prep,
            priori,
            eval,
            priori_reports,
        });
        stages.insert((id, faults), stage.clone());
        Ok(stage)
    }

    /// Labels, reward model and tuning from the trial seed, then a paired
    /// evaluation against the stage priori.
    pub fn trial(&self, t: &Trial) -> Result<TrialOutcome> {
        let stage = self.stage(t.patient, t.faults)?;
        log::info!("tuning {} on {} (seed {}, λ {})", t.labels.preference, t.patient, t.seed, t.lambda);
        let labels = auto_label(&stage.prep, &stage.patient, &t.labels, derive(t.seed, 1))?;
        let reward = train_reward(&stage.prep, &labels, &self.profile.reward, derive(t.seed, 2))?;
        let mut bundle = tune_bundle(&stage.prep, &stage.priori, &reward, t.lambda, &self.profile.td3, derive(t.seed, 3))?;
        bundle.meta.preference = Some(t.labels.preference.name());
        let tuned = evaluate_bundle(&bundle, &stage.patient, &stage.eval)?;
        Ok(TrialOutcome {
            bundle,
            priori: stage.priori_reports.clone(),
            tuned,
        })
    }

    /// Noise-free PID at setpoint `target`, under the stage's evaluation seeds.
    pub fn pid(&self, id: PatientId, target: f64, faults: bool) -> Result<Vec<EpisodeReport>> {
        let patient = self.patient(id)?;
        let gains = crate::sim::PidGains {
            g_targ_mgdl: target,
            ..patient.pid
        };
        evaluate_pid(patient, gains, &self.eval_config(id, faults))
    }

    pub fn label_spec(&self, preference: Preference) -> LabelSpec {
        LabelSpec::new(preference, self.profile.labels)
    }

    /// Runs `specs` for every patient and profile seed, in parallel, keeping
    /// (spec, patient, seed) order.
    fn sweep(&self, exp: Experiment, specs: &[(String, LabelSpec, bool)]) -> Result<Vec<RunRecord>> {
        for &id in &self.patients {
            for faults in specs.iter().map(|s| s.2) {
                self.stage(id, faults)?;
            }
        }
        let mut jobs = Vec::new();
        for (cond, spec, faults) in specs {
            for &patient in &self.patients {
                for &seed in &self.profile.seeds {
                    jobs.push((cond.clone(), *spec, *faults, patient, seed));
                }
            }
        }
        jobs.into_par_iter()
            .map(|(condition, labels, faults, patient, seed)| {
                let trial = Trial {
                    patient,
                    faults,
                    labels,
                    seed,
                    lambda: self.profile.lambda,
                };
                let out = self.trial(&trial)?;
                Ok(RunRecord {
                    experiment: exp,
                    condition,
                    patient,
                    seed: Some(seed),
                    controller: "paint".into(),
                    preference: Some(labels.preference.name()),
                    lambda: Some(trial.lambda),
                    priori: Some(Summary::of(&out.priori)),
                    result: Summary::of(&out.tuned),
                })
            })
            .collect()
    }

    pub fn run(&self, exp: Experiment) -> Result<ResultTable> {
        let (runs, summary) = match exp {
            Experiment::BgTargets => self.bg_targets()?,
            Experiment::CommonGoals => self.goal_sweep(exp, &self.plan.goals, |g| g.name.clone(), |g| self.label_spec(g.preference), true)?,
            Experiment::Mealtimes => self.case_study(exp, Preference::Mealtime, false, &[(Metric::PostMealTir, true)])?,
            Experiment::Compression => self.case_study(
                exp,
                Preference::Compression,
                true,
                &[(Metric::PostEventBasal, true), (Metric::PostEventCov, false)],
            )?,
            Experiment::SampleEfficiency => {
                let limit = self.profile.train_episodes * (self.profile.episode_days * crate::STEPS_PER_DAY);
                let conds = cross(&self.plan.label_counts.iter().copied().filter(|&n| n < limit).collect::<Vec<_>>(), &self.plan.goals);
                self.goal_sweep(exp, &conds, |(n, g)| format!("labels={n}/{}", g.preference), |(n, g)| {
                    LabelSpec::new(g.preference, *n)
                }, false)?
            }
            Experiment::CorruptLabels => {
                let conds = cross(&self.plan.negate_fracs, &self.plan.goals);
                self.goal_sweep(exp, &conds, |(f, g)| format!("negate={f}/{}", g.preference), |(f, g)| LabelSpec {
                    corruption: Corruption { negate_frac: *f },
                    ..self.label_spec(g.preference)
                }, false)?
            }
            Experiment::LabelNoise => {
                let conds = cross(&self.plan.noise_multiples, &self.plan.goals);
                self.goal_sweep(exp, &conds, |(k, g)| format!("noise={k}/{}", g.preference), |(k, g)| LabelSpec {
                    noise_multiple: *k,
                    ..self.label_spec(g.preference)
                }, false)?
            }
            Experiment::DiverseStrategies => {
                let goals: Vec<Goal> = Preference::STRATEGIES.iter().filter_map(|&p| Goal::for_strategy(p)).collect();
                self.goal_sweep(exp, &goals, |g| g.preference.name(), |g| self.label_spec(g.preference), false)?
            }
        };
        Ok(ResultTable {
            experiment: exp,
            profile: self.profile.name.clone(),
            runs,
            summary,
        })
    }

    /// Tunes every condition and summarises its goal metric and the Magni
    /// total. With `benchmark`, each goal is also compared with the best PID
    /// setpoint for it.
    fn goal_sweep<C, N, S>(
        &self,
        exp: Experiment,
        conds: &[C],
        name: N,
        spec: S,
        benchmark: bool,
    ) -> Result<(Vec<RunRecord>, Vec<SummaryRow>)>
    where
        C: AsGoal,
        N: Fn(&C) -> String,
        S: Fn(&C) -> LabelSpec,
    {
        let specs: Vec<_> = conds.iter().map(|c| (name(c), spec(c), false)).collect();
        let runs = self.sweep(exp, &specs)?;
        let mut summary = Vec::new();
        for c in conds {
            let goal = c.goal();
            let cond = name(c);
            let bench = if benchmark { Some(self.pid_benchmark(goal)?) } else { None };
            for mut row in summarize(exp, &cond, &runs, &self.patients, goal.metric) {
                row.improved = row.change.map(|d| goal.improvement(d) > 0.0);
                if let Some(b) = &bench {
                    let b = if row.patient == "all" {
                        median(&b.values().copied().collect::<Vec<_>>())
                    } else {
                        row.patient.parse::<PatientId>().ok().and_then(|p| b.get(&p).copied())
                    };
                    row.benchmark = b;
                    row.achieved = match (row.change, b) {
                        (Some(d), Some(b)) => Some(goal.improvement(d) > 0.0 && goal.improvement(d) > goal.improvement(b)),
                        _ => None,
                    };
                }
                summary.push(row);
            }
            summary.extend(summarize(exp, &cond, &runs, &self.patients, Metric::MagniTotal));
        }
        Ok((runs, summary))
    }

    /// Per patient: the change in the goal metric from the default PID
    /// setpoint to the best setpoint whose Magni total stays above the floor.
    fn pid_benchmark(&self, goal: &Goal) -> Result<HashMap<PatientId, f64>> {
        let floor = self.plan.pid_risk_floor_per_10d * self.profile.eval_days as f64 / 10.0;
        let mut out = HashMap::new();
        for &id in &self.patients {
            let default = Summary::of(&self.pid(id, self.patient(id)?.pid.g_targ_mgdl, false)?);
            let base = default.metric(goal.metric).unwrap_or(f64::NAN);
            let mut best = 0.0_f64;
            for &c in &self.plan.pid_targets {
                let s = Summary::of(&self.pid(id, c, false)?);
                if s.magni_total < floor || s.terminated > 0 {
                    continue;
                }
                if let Some(v) = s.metric(goal.metric) {
                    if goal.improvement(v - base) > goal.improvement(best) {
                        best = v - base;
                    }
                }
            }
            out.insert(id, best);
        }
        Ok(out)
    }

    fn case_study(
        &self,
        exp: Experiment,
        preference: Preference,
        faults: bool,
        metrics: &[(Metric, bool)],
    ) -> Result<(Vec<RunRecord>, Vec<SummaryRow>)> {
        let cond = preference.name();
        let runs = self.sweep(exp, &[(cond.clone(), self.label_spec(preference), faults)])?;
        let mut summary = Vec::new();
        for &(m, increase) in metrics {
            for mut row in summarize(exp, &cond, &runs, &self.patients, m) {
                row.improved = row.change.map(|d| if increase { d > 0.0 } else { d < 0.0 });
                summary.push(row);
            }
        }
        summary.extend(summarize(exp, &cond, &runs, &self.patients, Metric::MagniTotal));
        Ok((runs, summary))
    }

    fn bg_targets(&self) -> Result<(Vec<RunRecord>, Vec<SummaryRow>)> {
        let exp = Experiment::BgTargets;
        let mut runs = Vec::new();
        for &id in &self.patients {
            for &c in &self.plan.pid_targets {
                runs.push(RunRecord {
                    experiment: exp,
                    condition: format!("pid target={c}"),
                    patient: id,
                    seed: None,
                    controller: "pid".into(),
                    preference: None,
                    lambda: None,
                    priori: None,
                    result: Summary::of(&self.pid(id, c, false)?),
                });
            }
        }
        let specs: Vec<_> = self
            .plan
            .targets
            .iter()
            .map(|&c| (format!("target={c}"), self.label_spec(Preference::Target(c)), false))
            .collect();
        runs.extend(self.sweep(exp, &specs)?);
        let mut summary = Vec::new();
        for &c in &self.plan.targets {
            let cond = format!("target={c}");
            let pid_cond = format!("pid target={c}");
            for mut row in summarize(exp, &cond, &runs, &self.patients, Metric::MeanGlucose) {
                let pid: Vec<f64> = runs
                    .iter()
                    .filter(|r| r.condition == pid_cond && (row.patient == "all" || r.patient.as_str() == row.patient))
                    .map(|r| r.result.mean_glucose)
                    .collect();
                row.benchmark = median(&pid);
                row.achieved = row.benchmark.map(|b| (row.value - b).abs() <= self.plan.target_tolerance);
                summary.push(row);
            }
            summary.extend(summarize(exp, &cond, &runs, &self.patients, Metric::MagniTotal));
        }
        Ok((runs, summary))
    }
}

/// Conditions that carry a goal.
trait AsGoal {
    fn goal(&self) -> &Goal;
}

impl AsGoal for Goal {
    fn goal(&self) -> &Goal {
        self
    }
}

impl<T> AsGoal for (T, Goal) {
    fn goal(&self) -> &Goal {
        &self.1
    }
}

fn cross<T: Copy>(xs: &[T], goals: &[Goal]) -> Vec<(T, Goal)> {
    xs.iter().flat_map(|&x| goals.iter().map(move |g| (x, g.clone()))).collect()
}

/// Medians of `metric` over the tuned runs of `condition`: one row per
/// patient and one for the cohort.
pub fn summarize(
    exp: Experiment,
    condition: &str,
    runs: &[RunRecord],
    patients: &[PatientId],
    metric: Metric,
) -> Vec<SummaryRow> {
    let groups = patients
        .iter()
        .map(|p| p.as_str().to_string())
        .chain(std::iter::once("all".to_string()));
    groups
        .filter_map(|g| {
            let sel: Vec<&RunRecord> = runs
                .iter()
                .filter(|r| r.condition == condition && (g == "all" || r.patient.as_str() == g))
                .collect();
            let value = median(&sel.iter().filter_map(|r| r.result.metric(metric)).collect::<Vec<_>>())?;
            let pri: Vec<f64> = sel.iter().filter_map(|r| r.priori.and_then(|p| p.metric(metric))).collect();
            let change: Vec<f64> = sel
                .iter()
                .filter_map(|r| Some(r.result.metric(metric)? - r.priori?.metric(metric)?))
                .collect();
            Some(SummaryRow {
                experiment: exp,
                condition: condition.into(),
                patient: g,
                metric,
                runs: sel.len(),
                priori: median(&pri),
                value,
                change: median(&change),
                benchmark: None,
                improved: None,
                achieved: None,
            })
        })
        .collect()
}
