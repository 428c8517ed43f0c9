use serde::{Deserialize, Serialize};

use super::params::PatientParams;
use crate::{Error, Result};

/// Internal RK4 substep (minutes).
const SUBSTEP_MIN: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub plasma_glucose_mgdl: f64,
    /// X (1/min).
    pub remote_insulin_action: f64,
    /// Subcutaneous depots (U).
    pub sc_insulin_1: f64,
    pub sc_insulin_2: f64,
    /// mU/L.
    pub plasma_insulin: f64,
    /// Gut compartments (g).
    pub gut_carb_1: f64,
    pub gut_carb_2: f64,
    pub clock_min: f64,
}

impl SimState {
    /// Insulin compartments at the steady state of the equilibrium basal,
    /// empty gut, glucose set to `glucose_mgdl`.
    pub fn equilibrium(params: &PatientParams, glucose_mgdl: f64) -> Self {
        let ub = params.basal_equilibrium_u_per_min;
        let i_b = params.steady_plasma_insulin(ub);
        Self {
            plasma_glucose_mgdl: glucose_mgdl,
            remote_insulin_action: params.insulin_sensitivity * i_b,
            sc_insulin_1: ub * params.t_max_insulin_min,
            sc_insulin_2: ub * params.t_max_insulin_min,
            plasma_insulin: i_b,
            gut_carb_1: 0.0,
            gut_carb_2: 0.0,
            clock_min: 0.0,
        }
    }

    fn to_array(self) -> [f64; 7] {
        [
            self.plasma_glucose_mgdl,
            self.remote_insulin_action,
            self.sc_insulin_1,
            self.sc_insulin_2,
            self.plasma_insulin,
            self.gut_carb_1,
            self.gut_carb_2,
        ]
    }

    fn from_array(x: [f64; 7], clock_min: f64) -> Self {
        Self {
            plasma_glucose_mgdl: x[0],
            remote_insulin_action: x[1],
            sc_insulin_1: x[2].max(0.0),
            sc_insulin_2: x[3].max(0.0),
            plasma_insulin: x[4].max(0.0),
            gut_carb_1: x[5].max(0.0),
            gut_carb_2: x[6].max(0.0),
            clock_min,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite()) && self.clock_min.is_finite()
    }

    pub fn in_range(&self) -> bool {
        let (lo, hi) = crate::GLUCOSE_RANGE;
        self.plasma_glucose_mgdl >= lo && self.plasma_glucose_mgdl <= hi
    }
}

struct Rates {
    egp: f64,
    sensitivity_scale: f64,
    insulin_gain: f64,
    meal_gain: f64,
}

impl Rates {
    fn new(p: &PatientParams, sensitivity_scale: f64) -> Self {
        Self {
            egp: p.endogenous_production(),
            sensitivity_scale,
            insulin_gain: 1000.0 / (p.distribution_volume_insulin * p.weight_kg),
            meal_gain: 1000.0 * p.carb_bioavailability
                / (p.distribution_volume_glucose * p.weight_kg),
        }
    }
}

fn derivative(x: &[f64; 7], p: &PatientParams, r: &Rates, infusion: f64) -> [f64; 7] {
    let [g, act, s1, s2, ins, q1, q2] = *x;
    let absorption = s2 / p.t_max_insulin_min;
    let appearance = r.meal_gain * q2 / p.t_max_meal_min;
    [
        -(p.glucose_effectiveness + r.sensitivity_scale * act) * g + r.egp + appearance,
        p.insulin_action_rate * (p.insulin_sensitivity * ins - act),
        infusion - s1 / p.t_max_insulin_min,
        (s1 - s2) / p.t_max_insulin_min,
        r.insulin_gain * absorption - p.insulin_clearance * ins,
        -q1 / p.t_max_meal_min,
        (q1 - q2) / p.t_max_meal_min,
    ]
}

fn axpy(x: &[f64; 7], k: &[f64; 7], h: f64) -> [f64; 7] {
    std::array::from_fn(|i| x[i] + h * k[i])
}

/// Advances the patient by `dt_min`. The bolus and carbs are delivered as
/// impulses into the first subcutaneous and gut compartments at the start of
/// the step; the basal is a constant infusion across it. Integration is RK4
/// with one-minute substeps.
pub fn step(
    state: &SimState,
    params: &PatientParams,
    basal_u_per_min: f64,
    bolus_u: f64,
    carbs_g: f64,
    dt_min: f64,
) -> Result<SimState> {
    step_scaled(state, params, 1.0, basal_u_per_min, bolus_u, carbs_g, dt_min)
}

/// [`step`] with the insulin effect on glucose uptake multiplied by
/// `sensitivity_scale`. Endogenous production stays at its nominal value, so
/// a scale above one lowers the glucose the equilibrium basal holds.
pub fn step_scaled(
    state: &SimState,
    params: &PatientParams,
    sensitivity_scale: f64,
    basal_u_per_min: f64,
    bolus_u: f64,
    carbs_g: f64,
    dt_min: f64,
) -> Result<SimState> {
    if !(basal_u_per_min >= 0.0 && bolus_u >= 0.0 && carbs_g >= 0.0 && dt_min > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "step inputs must be non-negative (basal {basal_u_per_min}, bolus {bolus_u}, carbs {carbs_g}, dt {dt_min})"
        )));
    }
    let rates = Rates::new(params, sensitivity_scale);
    let mut x = state.to_array();
    x[2] += bolus_u;
    x[5] += carbs_g;

    let substeps = (dt_min / SUBSTEP_MIN).ceil().max(1.0) as usize;
    let h = dt_min / substeps as f64;
    for _ in 0..substeps {
        let k1 = derivative(&x, params, &rates, basal_u_per_min);
        let k2 = derivative(&axpy(&x, &k1, h / 2.0), params, &rates, basal_u_per_min);
        let k3 = derivative(&axpy(&x, &k2, h / 2.0), params, &rates, basal_u_per_min);
        let k4 = derivative(&axpy(&x, &k3, h), params, &rates, basal_u_per_min);
        for i in 0..7 {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    let next = SimState::from_array(x, state.clock_min + dt_min);
    if !next.is_finite() {
        return Err(Error::SimulationFault {
            clock_min: state.clock_min,
        });
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{Cohort, PatientId};
    use crate::STEP_MIN;

    fn adult() -> PatientParams {
        Cohort::builtin().get(PatientId::Adult).unwrap().params.clone()
    }

    fn simulate(
        p: &PatientParams,
        mut s: SimState,
        steps: usize,
        basal: f64,
        first_bolus: f64,
        first_carbs: f64,
    ) -> Vec<f64> {
        let mut out = vec![s.plasma_glucose_mgdl];
        for k in 0..steps {
            let (b, c) = if k == 0 { (first_bolus, first_carbs) } else { (0.0, 0.0) };
            s = step(&s, p, basal, b, c, STEP_MIN).unwrap();
            out.push(s.plasma_glucose_mgdl);
        }
        out
    }

    #[test]
    fn equilibrium_is_stationary() {
        for prof in &Cohort::builtin().patients {
            let p = &prof.params;
            let s0 = SimState::equilibrium(p, p.fasting_glucose_mgdl);
            let g = simulate(p, s0, 960, p.basal_equilibrium_u_per_min, 0.0, 0.0);
            let drift = g.iter().map(|v| (v - p.fasting_glucose_mgdl).abs()).fold(0.0, f64::max);
            assert!(drift < 2.0, "{}: drift {drift}", p.id);
        }
    }

    #[test]
    fn high_glucose_decays_monotonically_to_fasting() {
        let p = adult();
        let s0 = SimState::equilibrium(&p, p.fasting_glucose_mgdl + 60.0);
        let g = simulate(&p, s0, 480, p.basal_equilibrium_u_per_min, 0.0, 0.0);
        for w in g.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
            assert!(w[1] >= p.fasting_glucose_mgdl - 1e-9);
        }
        assert!((g.last().unwrap() - p.fasting_glucose_mgdl).abs() < 1.0);
    }

    #[test]
    fn unbolused_meal_peak_timing_and_height() {
        for prof in &Cohort::builtin().patients {
            let p = &prof.params;
            let s0 = SimState::equilibrium(p, p.fasting_glucose_mgdl);
            let g = simulate(p, s0, 160, p.basal_equilibrium_u_per_min, 0.0, 50.0);
            let (imax, gmax) = g
                .iter()
                .copied()
                .enumerate()
                .fold((0, f64::MIN), |a, (i, v)| if v > a.1 { (i, v) } else { a });
            let t_peak = imax as f64 * STEP_MIN;
            let rise = gmax - g[0];
            assert!((60.0..=120.0).contains(&t_peak), "{}: peak at {t_peak}", p.id);
            assert!((60.0..=160.0).contains(&rise), "{}: rise {rise}", p.id);
        }
    }

    #[test]
    fn masses_stay_non_negative() {
        let p = adult();
        let mut s = SimState::equilibrium(&p, 140.0);
        for k in 0..2000 {
            let basal = if k % 7 == 0 { 0.0 } else { p.max_basal() };
            let bolus = if k % 97 == 0 { 3.0 } else { 0.0 };
            let carbs = if k % 131 == 0 { 40.0 } else { 0.0 };
            s = step(&s, &p, basal, bolus, carbs, STEP_MIN).unwrap();
            assert!(s.sc_insulin_1 >= 0.0 && s.sc_insulin_2 >= 0.0);
            assert!(s.plasma_insulin >= 0.0 && s.gut_carb_1 >= 0.0 && s.gut_carb_2 >= 0.0);
        }
    }

    #[test]
    fn negative_input_rejected() {
        let p = adult();
        let s = SimState::equilibrium(&p, 140.0);
        assert!(step(&s, &p, -0.1, 0.0, 0.0, STEP_MIN).is_err());
    }

    #[test]
    fn non_finite_state_is_a_fault() {
        let p = adult();
        let mut s = SimState::equilibrium(&p, 140.0);
        s.plasma_glucose_mgdl = f64::NAN;
        assert!(matches!(
            step(&s, &p, 0.01, 0.0, 0.0, STEP_MIN),
            Err(Error::SimulationFault { .. })
        ));
    }

    #[test]
    fn extra_bolus_never_raises_glucose() {
        let p = adult();
        let s0 = SimState::equilibrium(&p, 160.0);
        let a = simulate(&p, s0, 400, p.basal_equilibrium_u_per_min, 0.0, 60.0);
        let b = simulate(&p, s0, 400, p.basal_equilibrium_u_per_min, 2.0, 60.0);
        for (ga, gb) in a.iter().zip(&b).skip(1) {
            assert!(gb <= ga);
        }
    }
}
