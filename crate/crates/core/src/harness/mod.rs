//! End-to-end pipeline and the experiment suite.

mod experiments;
mod pipeline;
mod profile;

pub use pipeline::{
    auto_label, environment, evaluate, evaluate_bundle, evaluate_paired, evaluate_pid, generate_dataset, train_priori,
    train_reward, tune_bundle, EvalConfig, LabelSpec, PairedReport, Prepared,
};
pub use experiments::{
    summarize, Experiment, Goal, Lab, Metric, Plan, ResultTable, RunRecord, Stage, Summary, SummaryRow, Trial, TrialOutcome,
};
pub use profile::Profile;
