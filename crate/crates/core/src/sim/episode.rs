use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::cgm::{read_cgm, CgmConfig, CgmSensor, FaultInjector};
use super::meals::MealSchedule;
use super::model::{step_scaled, SimState};
use super::params::PatientParams;
use crate::control::{bolus, BolusConfig};
use crate::data::{Sample, Trajectory};
use crate::rng::{stream, Rng, Stream};
use crate::{Result, STEPS_PER_DAY, STEP_MIN};

/// A basal dosing policy.
///
/// At step `t` the history holds samples `0..=t`; the CGM reading, carbs and
/// bolus of step `t` are already recorded, the basal of step `t` is not.
pub trait Controller {
    fn reset(&mut self, _params: &PatientParams, _rng: &mut Rng) {}

    /// Basal rate in U/min.
    fn basal(&mut self, history: &Trajectory, t: usize, rng: &mut Rng) -> f64;
}

impl<F> Controller for F
where
    F: FnMut(&Trajectory, usize) -> f64,
{
    fn basal(&mut self, history: &Trajectory, t: usize, _rng: &mut Rng) -> f64 {
        self(history, t)
    }
}

/// Slow random drift of insulin sensitivity: log-sensitivity follows an
/// Ornstein-Uhlenbeck process with stationary std `std` and correlation
/// time `correlation_min`. A zero std keeps the nominal value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityDrift {
    pub std: f64,
    pub correlation_min: f64,
}

impl SensitivityDrift {
    pub fn none() -> Self {
        Self { std: 0.0, correlation_min: 240.0 }
    }

    /// Multipliers for `n` consecutive steps, starting from the stationary
    /// distribution.
    pub fn realize(&self, n: usize, rng: &mut Rng) -> Vec<f64> {
        let decay = (-STEP_MIN / self.correlation_min).exp();
        let kick = self.std * (1.0 - decay * decay).sqrt();
        let mut x = self.std * rng.sample::<f64, _>(StandardNormal);
        (0..n)
            .map(|_| {
                let m = x.exp();
                x = decay * x + kick * rng.sample::<f64, _>(StandardNormal);
                m
            })
            .collect()
    }
}

impl Default for SensitivityDrift {
    fn default() -> Self {
        Self { std: 0.25, correlation_min: 240.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub days: usize,
    pub meals: MealSchedule,
    pub faults: FaultInjector,
    pub cgm: CgmConfig,
    /// Mealtime bolus calculator; `None` disables boluses.
    pub bolus: Option<BolusConfig>,
    /// Start glucose is fasting + Uniform(-j, +j).
    pub initial_glucose_jitter_mgdl: f64,
    pub sensitivity: SensitivityDrift,
    pub start_clock_min: f64,
}

impl EpisodeConfig {
    pub fn new(days: usize, meals: MealSchedule) -> Self {
        Self {
            days,
            meals,
            faults: FaultInjector::none(),
            cgm: CgmConfig::default(),
            bolus: None,
            initial_glucose_jitter_mgdl: 20.0,
            sensitivity: SensitivityDrift::default(),
            start_clock_min: 0.0,
        }
    }
}

/// Simulates `cfg.days` days at 3-minute resolution under `controller`.
///
/// Every random source (meals, sensor, faults, controller, start state,
/// bolus error) draws from its own stream keyed by `seed`, so the run is a
/// pure function of its arguments. The episode stops early, with
/// `terminated` set and the out-of-range observation appended, as soon as
/// plasma glucose leaves [10, 1000] mg/dL.
pub fn run_episode(
    params: &PatientParams,
    controller: &mut dyn Controller,
    cfg: &EpisodeConfig,
    seed: u64,
    episode_id: u64,
) -> Result<Trajectory> {
    let mut init_rng = stream(seed, Stream::Initial);
    let mut meal_rng = stream(seed, Stream::Meals);
    let mut cgm_rng = stream(seed, Stream::Cgm);
    let mut fault_rng = stream(seed, Stream::Faults);
    let mut ctrl_rng = stream(seed, Stream::Controller);
    let mut bolus_rng = stream(seed, Stream::Bolus);
    let mut sens_rng = stream(seed, Stream::Sensitivity);

    let jitter = cfg.initial_glucose_jitter_mgdl;
    let g0 = params.fasting_glucose_mgdl + jitter * (2.0 * init_rng.random::<f64>() - 1.0);
    let mut state = SimState::equilibrium(params, g0);
    state.clock_min = cfg.start_clock_min;

    let n_steps = cfg.days * STEPS_PER_DAY;
    let meals = cfg.meals.realize(cfg.days, cfg.start_clock_min, &mut meal_rng);
    let faults = cfg.faults.schedule(cfg.days, cfg.start_clock_min, &mut fault_rng);
    let mut sensor = CgmSensor::new(cfg.cgm);
    controller.reset(params, &mut ctrl_rng);

    let mut carbs_at = vec![0.0; n_steps];
    for m in &meals {
        carbs_at[m.step] += m.carbs_g;
    }

    let sensitivity = cfg.sensitivity.realize(n_steps, &mut sens_rng);

    let mut traj = Trajectory::new(params.id.as_str(), episode_id, seed, cfg.start_clock_min);
    let max_basal = params.max_basal();
    for t in 0..n_steps {
        let cgm = read_cgm(&state, &mut sensor, &faults, &mut cgm_rng);
        let carbs = carbs_at[t];
        let dose = match (&cfg.bolus, carbs > 0.0) {
            (Some(bc), true) => {
                let lookback = bc.carb_lookback_steps.min(t);
                let recent: f64 = carbs_at[t - lookback..t].iter().sum();
                bolus(carbs, cgm, recent, bc, &mut bolus_rng)
            }
            _ => 0.0,
        };
        traj.push(Sample {
            t: t as f64 * STEP_MIN,
            glucose: cgm,
            true_glucose: state.plasma_glucose_mgdl,
            basal: 0.0,
            bolus: dose,
            carbs,
            cgm_depression: faults.depression_at(state.clock_min),
        });
        let basal = controller.basal(&traj, t, &mut ctrl_rng);
        let basal = if basal.is_finite() { basal.clamp(0.0, max_basal) } else { 0.0 };
        traj.basal[t] = basal;

        state = step_scaled(&state, params, sensitivity[t], basal, dose, carbs, STEP_MIN)?;
        if !state.in_range() {
            let cgm = read_cgm(&state, &mut sensor, &faults, &mut cgm_rng);
            traj.push(Sample {
                t: (t + 1) as f64 * STEP_MIN,
                glucose: cgm,
                true_glucose: state.plasma_glucose_mgdl,
                basal: 0.0,
                bolus: 0.0,
                carbs: 0.0,
                cgm_depression: faults.depression_at(state.clock_min),
            });
            traj.terminated = true;
            break;
        }
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::ConstantRate;
    use crate::sim::{Cohort, PatientId};

    fn setup() -> (PatientParams, EpisodeConfig) {
        let prof = Cohort::builtin().get(PatientId::Adult).unwrap().clone();
        let mut cfg = EpisodeConfig::new(10, prof.meals.clone());
        cfg.bolus = Some(BolusConfig::for_patient(&prof.params, prof.pid.g_targ_mgdl));
        (prof.params, cfg)
    }

    #[test]
    fn ten_days_is_4800_samples() {
        let (p, cfg) = setup();
        let mut ctrl = ConstantRate(p.basal_equilibrium_u_per_min);
        let tr = run_episode(&p, &mut ctrl, &cfg, 1, 0).unwrap();
        assert_eq!(tr.len(), 4800);
        assert!(!tr.terminated);
        tr.validate().unwrap();
    }

    #[test]
    fn zero_insulin_terminates_high() {
        let (p, mut cfg) = setup();
        cfg.bolus = None;
        let mut ctrl = ConstantRate(0.0);
        let tr = run_episode(&p, &mut ctrl, &cfg, 2, 0).unwrap();
        assert!(tr.terminated);
        assert!(*tr.true_glucose.last().unwrap() > 1000.0);
        assert!(tr.true_glucose[..tr.len() - 1].iter().all(|&g| (10.0..=1000.0).contains(&g)));
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let (p, mut cfg) = setup();
        cfg.faults = FaultInjector::compression_lows();
        let mut a = ConstantRate(0.015);
        let mut b = ConstantRate(0.015);
        let ta = run_episode(&p, &mut a, &cfg, 77, 3).unwrap();
        let tb = run_episode(&p, &mut b, &cfg, 77, 3).unwrap();
        assert_eq!(ta.to_bytes(), tb.to_bytes());
        let tc = run_episode(&p, &mut ConstantRate(0.015), &cfg, 78, 3).unwrap();
        assert_ne!(ta.glucose, tc.glucose);
    }

    #[test]
    fn faults_only_touch_the_sensor() {
        let (p, mut cfg) = setup();
        cfg.bolus = None;
        let clean = run_episode(&p, &mut ConstantRate(0.0167), &cfg, 5, 0).unwrap();
        cfg.faults = FaultInjector::compression_lows();
        let faulty = run_episode(&p, &mut ConstantRate(0.0167), &cfg, 5, 0).unwrap();
        assert_eq!(clean.true_glucose, faulty.true_glucose);
        assert!(faulty.cgm_depression.iter().any(|&d| d > 0.0));
        assert_ne!(clean.glucose, faulty.glucose);
    }

    #[test]
    fn closures_are_controllers() {
        let (p, cfg) = setup();
        let mut calls = 0usize;
        let mut f = |_h: &Trajectory, _t: usize| {
            calls += 1;
            0.0167
        };
        let tr = run_episode(&p, &mut f, &EpisodeConfig { days: 1, ..cfg }, 1, 0).unwrap();
        assert_eq!(calls, tr.len());
    }
}
