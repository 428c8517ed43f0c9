//! Compartmental glucose–insulin patient.
//!
//! The model is a T1D form of the Bergman minimal model:
//!
//! ```text
//! dG/dt  = -(S_G + X)·G + EGP + Ra(t)
//! dX/dt  = -p2·X + p2·S_I·I
//! dI/dt  = 1000·(S2 / t_max,I) / (V_I·W) - k_e·I
//! dS1/dt = u(t) - S1 / t_max,I
//! dS2/dt = (S1 - S2) / t_max,I
//! dQ1/dt = -Q1 / t_max,G
//! dQ2/dt = (Q1 - Q2) / t_max,G,      Ra = 1000·f·Q2 / (t_max,G·V_G·W)
//! ```
//!
//! EGP is fixed by requiring the basal-equilibrium infusion to hold fasting
//! glucose, so every patient has exactly one steady basal rate.

mod cgm;
mod episode;
mod meals;
mod model;
mod params;

pub use cgm::{read_cgm, CgmConfig, CgmSensor, CompressionEvent, FaultInjector, FaultMode, FaultSchedule};
pub use episode::{run_episode, Controller, EpisodeConfig, SensitivityDrift};
pub use meals::{MealEvent, MealSchedule, MealSpec};
pub use model::{step, step_scaled, SimState};
pub use params::{Cohort, PatientId, PatientParams, PatientProfile, PidGains, DEFAULT_COHORT_TOML};
