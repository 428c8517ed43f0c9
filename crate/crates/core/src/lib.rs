//! Preference-adaptive basal insulin control.
//!
//! The crate is organised around the training pipeline:
//!
//! - [`sim`]: seedable compartmental glucose–insulin patient with CGM noise,
//!   meal schedules and compression-low sensor faults.
//! - [`control`]: the PID basal demonstrator, the mealtime bolus calculator
//!   and constant-rate baselines.
//! - [`features`]: the 21-dimensional state vector, insulin/carb activity
//!   curves and feature normalisation.
//! - [`nn`]: a small dense-network engine (forward, reverse-mode gradients,
//!   Adam, soft target updates, checkpoints).
//! - [`data`]: trajectory files, datasets, n-step transition views and replay
//!   sampling.
//! - [`metrics`]: Magni risk and glycaemic summary statistics.
//! - [`preferences`]: simulated patient labelling strategies.
//! - [`reward`]: sketch labels, stratified batching and the reward model.
//! - [`orl`]: TD3+BC pre-training of the safety policy and λ-constrained
//!   preference tuning.
//! - [`harness`]: end-to-end pipeline and the experiment suite.

mod codec;
pub mod control;
pub mod data;
pub mod error;
pub mod features;
pub mod harness;
pub mod metrics;
pub mod nn;
pub mod orl;
pub mod preferences;
pub mod reward;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};

/// Controller and simulator timestep in minutes.
pub const STEP_MIN: f64 = 3.0;

/// Samples per simulated day at [`STEP_MIN`] resolution.
pub const STEPS_PER_DAY: usize = 480;

/// Glucose bounds (mg/dL) outside which an episode terminates.
pub const GLUCOSE_RANGE: (f64, f64) = (10.0, 1000.0);
