//! Demonstrator and baseline dosing policies.

mod bolus;
mod pid;
mod tuning;

pub use bolus::{bolus, BolusConfig};
pub use pid::{pid_action, PidConfig, PidController};
pub use tuning::{pid_episode_risk, tune_pid_gains, PidTuningGrid};

use crate::data::Trajectory;
use crate::rng::Rng;
use crate::sim::Controller;

/// Fixed basal rate (U/min).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantRate(pub f64);

impl Controller for ConstantRate {
    fn basal(&mut self, _history: &Trajectory, _t: usize, _rng: &mut Rng) -> f64 {
        self.0
    }
}
