//! `paintctl`: dataset generation, the two training phases, evaluation, the
//! experiment suite and the HTTP service behind the sketching UI.
//!
//! Artifacts live under `$PAINT_DATA_DIR` (see [`store::Store`]).

pub mod commands;
pub mod error;
pub mod service;
pub mod store;

use clap::{Args, Parser, Subcommand};
use paint_core::harness::{EvalConfig, Experiment, LabelSpec, Plan, Profile};
use paint_core::preferences::{Corruption, Preference};
use paint_core::sim::PatientId;
use serde_json::{json, Value};

pub use error::{CliError, CliResult, ErrorRecord};
pub use paint_core;

use commands::Ctx;
use store::Store;

#[derive(Debug, Parser)]
#[command(name = "paintctl", version, about = "Preference-tuned basal insulin control")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Artifact root.
    #[arg(long, global = true, env = store::DATA_DIR_VAR)]
    pub data_dir: Option<std::path::PathBuf>,
    /// Experiment scale: desk, ci, smoke or paper.
    #[arg(long, global = true, default_value = "desk")]
    pub profile: String,
    /// Shorthand for `--profile paper`.
    #[arg(long, global = true)]
    pub paper_scale: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate demonstrator episodes into a dataset.
    GenData {
        #[arg(long)]
        patient: String,
        #[arg(long, default_value_t = 10)]
        days: usize,
        /// Defaults to the profile's dataset size.
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Inject nightly compression lows.
        #[arg(long)]
        faults: bool,
        /// Dataset name; defaults to the patient.
        #[arg(long)]
        name: Option<String>,
    },
    /// Phase 1: train the safety policy.
    TrainPriori {
        #[arg(long)]
        dataset: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Bundle name; defaults to the dataset name.
        #[arg(long)]
        out: Option<String>,
    },
    /// Label dataset segments with a simulated patient preference.
    AutoLabel {
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        preference: String,
        /// Defaults to the profile's label budget.
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Fraction of samples labelled with the negated preference.
        #[arg(long, default_value_t = 0.0)]
        negate_frac: f64,
        /// Gaussian label noise in multiples of the label std.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        /// Label set name; defaults to the preference.
        #[arg(long)]
        out: Option<String>,
    },
    /// Fit a reward model to sketch labels.
    TrainReward {
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        labels: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Reward model name; defaults to the label set name.
        #[arg(long)]
        out: Option<String>,
    },
    /// Phase 2: tune a priori bundle towards a reward model.
    Tune {
        #[arg(long)]
        bundle: String,
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        reward: String,
        /// Preference strength; defaults to the profile's.
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: String,
    },
    /// Closed-loop evaluation of a bundle and its priori.
    Eval {
        #[arg(long)]
        bundle: String,
        #[arg(long, default_value_t = 10)]
        days: usize,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        faults: bool,
        /// Evaluate only the priori policy.
        #[arg(long)]
        priori: bool,
    },
    /// Run one experiment of the suite.
    Experiment(ExperimentArgs),
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long)]
        dataset: String,
        /// Priori bundle; defaults to the dataset name.
        #[arg(long)]
        bundle: Option<String>,
        #[arg(long, default_value = "session")]
        session: String,
    },
    /// Grid-search PID gains for a patient.
    TunePid {
        #[arg(long)]
        patient: String,
        #[arg(long, default_value_t = 10)]
        days: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// bg-targets, common-goals, mealtimes, compression, sample-efficiency,
    /// corrupt-labels, label-noise or diverse-strategies.
    pub name: String,
    /// Comma-separated patients; defaults to the whole cohort.
    #[arg(long, value_delimiter = ',')]
    pub patients: Vec<String>,
    /// Comma-separated seeds; defaults to the profile's.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    /// Overrides the swept label budgets of sample-efficiency.
    #[arg(long, value_delimiter = ',')]
    pub label_counts: Vec<usize>,
    /// Overrides the tuned targets of bg-targets.
    #[arg(long, value_delimiter = ',')]
    pub targets: Vec<f64>,
}

/// What a successful command prints: a JSON value, and for experiments also
/// a human-readable table.
#[derive(Debug)]
pub struct Output {
    pub json: Value,
    pub text: Option<String>,
}

impl From<Value> for Output {
    fn from(json: Value) -> Self {
        Self { json, text: None }
    }
}

fn profile(g: &Global) -> CliResult<Profile> {
    Ok(if g.paper_scale {
        Profile::paper()
    } else {
        Profile::by_name(&g.profile)?
    })
}

fn patient(name: &str) -> CliResult<PatientId> {
    Ok(name.parse()?)
}

/// Executes a parsed command. The serve verb blocks until the server stops.
pub fn run(cli: Cli) -> CliResult<Output> {
    let store = cli.global.data_dir.clone().map(Store::new).unwrap_or_else(Store::from_env);
    let prof = profile(&cli.global)?;
    let ctx = Ctx::new(store, prof);
    let p = &ctx.profile;
    let out = match cli.command {
        Command::GenData {
            patient: name,
            days,
            episodes,
            seed,
            faults,
            name: ds,
        } => {
            let id = patient(&name)?;
            let ds = ds.unwrap_or_else(|| id.to_string());
            commands::gen_data(&ctx, id, days, episodes.unwrap_or(p.train_episodes), seed, faults, &ds)?.into()
        }
        Command::TrainPriori { dataset, seed, out } => {
            let out = out.unwrap_or_else(|| dataset.clone());
            commands::train_priori(&ctx, &dataset, seed, &out)?.into()
        }
        Command::AutoLabel {
            dataset,
            preference,
            samples,
            seed,
            negate_frac,
            noise,
            out,
        } => {
            let pref: Preference = preference.parse()?;
            if !(0.0..=1.0).contains(&negate_frac) || !(noise >= 0.0) {
                return Err(CliError::Usage("--negate-frac must be in [0, 1] and --noise non-negative".into()));
            }
            let spec = LabelSpec {
                preference: pref,
                samples: samples.unwrap_or(p.labels),
                corruption: Corruption { negate_frac },
                noise_multiple: noise,
            };
            let out = out.unwrap_or_else(|| pref.name().replace(':', "-"));
            commands::auto_label(&ctx, &dataset, &spec, seed, &out)?.into()
        }
        Command::TrainReward {
            dataset,
            labels,
            seed,
            out,
        } => {
            let set = ctx.store.load_labels(&labels)?;
            let out = out.unwrap_or_else(|| labels.clone());
            commands::train_reward(&ctx, &dataset, &set, seed, &out)?.into()
        }
        Command::Tune {
            bundle,
            dataset,
            reward,
            lambda,
            seed,
            out,
        } => commands::tune(&ctx, &bundle, &dataset, &reward, Some(reward.clone()), lambda.unwrap_or(p.lambda), seed, &out)?
            .into(),
        Command::Eval {
            bundle,
            days,
            repeats,
            seed,
            faults,
            priori,
        } => {
            let mut eval = EvalConfig::new(days, repeats, seed);
            if faults {
                eval.faults = paint_core::sim::FaultInjector::compression_lows();
            }
            commands::eval(&ctx, &bundle, &eval, priori)?.into()
        }
        Command::Experiment(args) => experiment(&ctx, args)?,
        Command::Serve {
            port,
            dataset,
            bundle,
            session,
        } => {
            let cfg = service::ServiceConfig {
                bundle: bundle.unwrap_or_else(|| dataset.clone()),
                dataset,
                session,
            };
            serve(ctx, cfg, port)?;
            json!({ "stopped": true }).into()
        }
        Command::TunePid { patient: name, days, seed } => commands::tune_pid(&ctx, patient(&name)?, days, seed)?.into(),
    };
    Ok(out)
}

fn experiment(ctx: &Ctx, args: ExperimentArgs) -> CliResult<Output> {
    let exp: Experiment = args.name.parse()?;
    let patients = if args.patients.is_empty() {
        None
    } else {
        Some(args.patients.iter().map(|s| patient(s)).collect::<CliResult<Vec<_>>>()?)
    };
    let mut ctx = ctx.clone();
    if !args.seeds.is_empty() {
        ctx.profile.seeds = args.seeds;
    }
    let mut plan = Plan::default();
    if !args.label_counts.is_empty() {
        plan.label_counts = args.label_counts;
    }
    if !args.targets.is_empty() {
        plan.targets = args.targets;
    }
    let (table, files) = commands::experiment(&ctx, exp, patients, plan)?;
    Ok(Output {
        json: json!({ "experiment": exp, "profile": table.profile, "files": files, "runs": table.runs.len() }),
        text: Some(table.render()),
    })
}

fn serve(ctx: Ctx, cfg: service::ServiceConfig, port: u16) -> CliResult<()> {
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let (app, _) = service::build(ctx, cfg)?;
        let listener = tokio::net::TcpListener::bind(("0.0.0.0", port)).await?;
        log::info!("listening on {}", listener.local_addr()?);
        axum::serve(listener, app).await.map_err(|e| CliError::Server(e.to_string()))
    })
}
