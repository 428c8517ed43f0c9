//! State featurisation: glucose and insulin history windows, insulin and
//! carbohydrates on board, and z-score normalisation.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Trajectory};
use crate::sim::PatientParams;
use crate::{Error, Result, STEP_MIN};

/// Length of the state vector.
pub const STATE_DIM: usize = 21;
/// History windows per signal.
pub const WINDOWS: usize = 8;
/// Samples per history window (30 min).
pub const WINDOW_STEPS: usize = 10;

pub const IDX_GLUCOSE: usize = 0;
pub const IDX_GLUCOSE_MEANS: usize = 1;
pub const IDX_INSULIN_MEANS: usize = 1 + WINDOWS;
pub const IDX_IOB: usize = 1 + 2 * WINDOWS;
pub const IDX_COB: usize = IDX_IOB + 1;
pub const IDX_WEIGHT: usize = IDX_IOB + 2;
pub const IDX_MEAN_BASAL: usize = IDX_IOB + 3;

/// Exponential activity curve with peak `t_p` and duration `t_d` (minutes),
/// as used by the Loop app for insulin and carbohydrate absorption.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActivityCurve {
    pub peak_min: f64,
    pub duration_min: f64,
    tau: f64,
    a: f64,
    s: f64,
}

impl ActivityCurve {
    pub fn new(peak_min: f64, duration_min: f64) -> Result<Self> {
        if !(peak_min > 0.0 && duration_min > 2.0 * peak_min) {
            return Err(Error::InvalidParameter(format!(
                "activity curve needs 0 < 2·t_p < t_d, got t_p={peak_min}, t_d={duration_min}"
            )));
        }
        let (tp, td) = (peak_min, duration_min);
        let tau = tp * (1.0 - tp / td) / (1.0 - 2.0 * tp / td);
        let a = 2.0 * tau / td;
        let s = 1.0 / (1.0 - a + (1.0 + a) * (-td / tau).exp());
        Ok(Self {
            peak_min,
            duration_min,
            tau,
            a,
            s,
        })
    }

    pub fn insulin() -> Self {
        Self::new(55.0, 240.0).expect("valid insulin curve")
    }

    pub fn carbs() -> Self {
        Self::new(40.0, 210.0).expect("valid carb curve")
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Absorption rate (1/min) at age `t_min`; integrates to 1 over `[0, t_d]`.
    pub fn activity(&self, t_min: f64) -> f64 {
        let td = self.duration_min;
        if !(0.0..=td).contains(&t_min) {
            return 0.0;
        }
        self.s / (self.tau * self.tau) * t_min * (1.0 - t_min / td) * (-t_min / self.tau).exp()
    }

    /// Fraction of a dose still to be absorbed at age `t_min`.
    pub fn remaining(&self, t_min: f64) -> f64 {
        if t_min <= 0.0 {
            return 1.0;
        }
        if t_min >= self.duration_min {
            return 0.0;
        }
        let (tau, td, a) = (self.tau, self.duration_min, self.a);
        let inner = (t_min * t_min / (tau * td * (1.0 - a)) - t_min / tau - 1.0) * (-t_min / tau).exp() + 1.0;
        (1.0 - self.s * (1.0 - a) * inner).clamp(0.0, 1.0)
    }
}

/// Σ dose · remaining(age) over `(age_min, dose)` pairs.
pub fn on_board(doses: impl IntoIterator<Item = (f64, f64)>, curve: &ActivityCurve) -> f64 {
    doses.into_iter().map(|(age, d)| d * curve.remaining(age)).sum()
}

/// Insulin on board at sample `t`: basal delivered before `t` plus every
/// bolus up to and including `t`.
pub fn iob(traj: &Trajectory, t: usize, curve: &ActivityCurve) -> f64 {
    let span = (curve.duration_min / STEP_MIN).ceil() as usize;
    let lo = t.saturating_sub(span);
    let mut total = traj.bolus[t];
    for j in lo..t {
        let age = (t - j) as f64 * STEP_MIN;
        total += (traj.basal[j] * STEP_MIN + traj.bolus[j]) * curve.remaining(age);
    }
    total
}

/// Carbohydrates on board at sample `t`, including a meal eaten at `t`.
pub fn cob(traj: &Trajectory, t: usize, curve: &ActivityCurve) -> f64 {
    let span = (curve.duration_min / STEP_MIN).ceil() as usize;
    let lo = t.saturating_sub(span);
    on_board((lo..=t).map(|j| ((t - j) as f64 * STEP_MIN, traj.carbs[j])), curve)
}

/// Insulin delivery rate (U/min) of sample `j`, spreading the bolus over the
/// step.
fn insulin_rate(traj: &Trajectory, j: usize) -> f64 {
    traj.basal[j] + traj.bolus[j] / STEP_MIN
}

/// Builds one state vector per sample of `traj`.
///
/// Layout: current CGM glucose; eight 30-minute glucose means, newest first,
/// where window `k` covers samples `(t - 10(k+1), t - 10k]`; eight insulin
/// rate means over samples strictly before `t`, window `k` covering
/// `[t - 10(k+1), t - 10k)`; insulin on board; carbs on board; body weight;
/// running mean of the episode's earlier basal actions. Glucose before the
/// start repeats the first reading; insulin and carbs before it are zero.
pub fn build_states(traj: &Trajectory, params: &PatientParams) -> Vec<[f64; STATE_DIM]> {
    let n = traj.len();
    let icurve = ActivityCurve::insulin();
    let ccurve = ActivityCurve::carbs();
    let first = traj.glucose.first().copied().unwrap_or(0.0);

    // prefix sums with one leading zero
    let mut gsum = vec![0.0; n + 1];
    let mut isum = vec![0.0; n + 1];
    let mut bsum = vec![0.0; n + 1];
    for j in 0..n {
        gsum[j + 1] = gsum[j] + traj.glucose[j];
        isum[j + 1] = isum[j] + insulin_rate(traj, j);
        bsum[j + 1] = bsum[j] + traj.basal[j];
    }
    // sum over sample range [lo, hi) with padding for negative indices
    let range = |sum: &[f64], pad: f64, lo: i64, hi: i64| -> f64 {
        let clo = lo.max(0) as usize;
        let chi = hi.max(0) as usize;
        let padded = (hi.min(0) - lo.min(0)) as f64;
        sum[chi] - sum[clo] + pad * padded
    };

    let mut out = Vec::with_capacity(n);
    for t in 0..n {
        let mut s = [0.0; STATE_DIM];
        s[IDX_GLUCOSE] = traj.glucose[t];
        let ti = t as i64;
        let w = WINDOW_STEPS as i64;
        for k in 0..WINDOWS as i64 {
            let g = range(&gsum, first, ti - w * (k + 1) + 1, ti - w * k + 1);
            s[IDX_GLUCOSE_MEANS + k as usize] = g / w as f64;
            let i = range(&isum, 0.0, ti - w * (k + 1), ti - w * k);
            s[IDX_INSULIN_MEANS + k as usize] = i / w as f64;
        }
        s[IDX_IOB] = iob(traj, t, &icurve);
        s[IDX_COB] = cob(traj, t, &ccurve);
        s[IDX_WEIGHT] = params.weight_kg;
        s[IDX_MEAN_BASAL] = if t == 0 { 0.0 } else { bsum[t] / t as f64 };
        out.push(s);
    }
    out
}

/// State vector at sample `index`. Only samples `0..=index` are read, so a
/// controller may call this on a partially recorded episode.
pub fn build_state(traj: &Trajectory, index: usize, params: &PatientParams) -> [f64; STATE_DIM] {
    let span = (WINDOWS * WINDOW_STEPS).max((ActivityCurve::insulin().duration_min / STEP_MIN) as usize + 1);
    // Everything but the running basal mean depends on a bounded window, so
    // featurise a suffix and patch the mean.
    let lo = index.saturating_sub(span + 1);
    if lo == 0 {
        let head = slice(traj, 0, index + 1);
        return *build_states(&head, params).last().expect("non-empty");
    }
    let mut s = single_from_suffix(traj, lo, index, params);
    s[IDX_MEAN_BASAL] = traj.basal[..index].iter().sum::<f64>() / index as f64;
    s
}

fn single_from_suffix(traj: &Trajectory, lo: usize, index: usize, params: &PatientParams) -> [f64; STATE_DIM] {
    let sub = slice(traj, lo, index + 1);
    *build_states(&sub, params).last().expect("non-empty")
}

fn slice(traj: &Trajectory, lo: usize, hi: usize) -> Trajectory {
    let mut out = Trajectory::new(traj.patient_id.clone(), traj.episode_id, traj.seed, traj.start_clock);
    for i in lo..hi {
        out.push(traj.sample(i));
    }
    out
}

/// State vectors and basal actions for every row of a dataset, in
/// [`Dataset::offsets`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub states: Vec<[f64; STATE_DIM]>,
    pub actions: Vec<f64>,
    pub offsets: Vec<usize>,
}

impl FeatureTable {
    pub fn build(dataset: &Dataset, params: &PatientParams) -> Self {
        let mut states = Vec::with_capacity(dataset.total_samples());
        let mut actions = Vec::with_capacity(dataset.total_samples());
        for ep in &dataset.episodes {
            states.extend(build_states(ep, params));
            actions.extend_from_slice(&ep.basal);
        }
        Self {
            states,
            actions,
            offsets: dataset.offsets(),
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Rows that start a transition (every sample but each episode's last).
    pub fn transition_rows(&self) -> Vec<usize> {
        self.offsets
            .windows(2)
            .flat_map(|w| w[0]..w[1].saturating_sub(1).max(w[0]))
            .collect()
    }
}

/// Per-feature z-score statistics, frozen after fitting on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    /// Fits mean and population std per column. Constant columns get std 1.
    pub fn fit<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::InvalidParameter("cannot fit a normalizer on zero rows".into()));
        };
        let dim = first.as_ref().len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: r.len() });
            }
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; dim];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r.as_ref()).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        let std = var
            .into_iter()
            .map(|v| {
                let s = v.sqrt();
                if s > 1e-9 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| (v - m) / s).collect()
    }

    pub fn normalize_into(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..x.len() {
            out[i] = (x[i] - self.mean[i]) / self.std[i];
        }
    }

    pub fn denormalize(&self, z: &[f64]) -> Vec<f64> {
        z.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| v * s + m).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Sample;
    use crate::sim::{Cohort, PatientId};
    use proptest::prelude::*;

    fn params() -> PatientParams {
        Cohort::builtin().get(PatientId::Adult).unwrap().params.clone()
    }

    fn trace(gs: &[f64]) -> Trajectory {
        let mut tr = Trajectory::new("adult", 0, 0, 0.0);
        for (i, &g) in gs.iter().enumerate() {
            tr.push(Sample {
                t: i as f64 * 3.0,
                glucose: g,
                true_glucose: g,
                basal: 0.0,
                bolus: 0.0,
                carbs: 0.0,
                cgm_depression: 0.0,
            });
        }
        tr
    }

    #[test]
    fn invalid_curve_rejected() {
        assert!(ActivityCurve::new(120.0, 240.0).is_err());
        assert!(ActivityCurve::new(0.0, 240.0).is_err());
    }

    #[test]
    fn activity_endpoints_and_mass() {
        for c in [ActivityCurve::insulin(), ActivityCurve::carbs()] {
            assert_eq!(c.activity(0.0), 0.0);
            assert_eq!(c.activity(c.duration_min), 0.0);
            // trapezoid integral over the support
            let n = 100_000;
            let h = c.duration_min / n as f64;
            let mass: f64 = (0..=n).map(|i| c.activity(i as f64 * h) * if i == 0 || i == n { 0.5 } else { 1.0 }).sum::<f64>() * h;
            assert!((mass - 1.0).abs() < 1e-6, "{mass}");
        }
    }

    #[test]
    fn remaining_matches_numeric_integral() {
        let c = ActivityCurve::insulin();
        let n = 200_000;
        let h = c.duration_min / n as f64;
        let mut acc = 0.0;
        for i in 0..n {
            let t0 = i as f64 * h;
            acc += 0.5 * h * (c.activity(t0) + c.activity(t0 + h));
            if (i + 1) % 10_000 == 0 {
                let t = (i + 1) as f64 * h;
                assert!((c.remaining(t) - (1.0 - acc)).abs() < 1e-6);
            }
        }
        assert_eq!(c.remaining(0.0), 1.0);
        assert_eq!(c.remaining(c.duration_min), 0.0);
    }

    #[test]
    fn single_dose_endpoints() {
        let c = ActivityCurve::insulin();
        assert_eq!(on_board(std::iter::empty(), &c), 0.0);
        assert_eq!(on_board([(0.0, 1.0)], &c), 1.0);
        assert_eq!(on_board([(240.0, 1.0)], &c), 0.0);
    }

    #[test]
    fn constant_trace_features() {
        let tr = trace(&[140.0; 200]);
        let st = build_states(&tr, &params());
        for s in [&st[0], &st[150]] {
            assert_eq!(s[IDX_GLUCOSE], 140.0);
            assert!(s[IDX_GLUCOSE_MEANS..IDX_INSULIN_MEANS].iter().all(|&g| (g - 140.0).abs() < 1e-12));
            assert!(s[IDX_INSULIN_MEANS..IDX_IOB].iter().all(|&v| v == 0.0));
            assert_eq!((s[IDX_IOB], s[IDX_COB]), (0.0, 0.0));
            assert_eq!(s[IDX_WEIGHT], 75.0);
        }
    }

    #[test]
    fn ramp_window_means_match_brute_force() {
        let gs: Vec<f64> = (0..300).map(|i| 100.0 + 0.7 * i as f64 + (i % 7) as f64).collect();
        let mut tr = trace(&gs);
        for i in 0..300 {
            tr.basal[i] = 0.01 + 0.0001 * i as f64;
            if i % 50 == 3 {
                tr.bolus[i] = 1.5;
            }
        }
        let st = build_states(&tr, &params());
        for &t in &[0usize, 5, 37, 80, 81, 299] {
            for k in 0..WINDOWS {
                let gw: Vec<f64> = (0..WINDOW_STEPS)
                    .map(|j| {
                        let idx = t as i64 - (WINDOW_STEPS * k + j) as i64;
                        if idx < 0 { gs[0] } else { gs[idx as usize] }
                    })
                    .collect();
                let want = gw.iter().sum::<f64>() / WINDOW_STEPS as f64;
                assert!((st[t][IDX_GLUCOSE_MEANS + k] - want).abs() < 1e-9);
                let iw: f64 = (1..=WINDOW_STEPS)
                    .map(|j| {
                        let idx = t as i64 - (WINDOW_STEPS * k + j) as i64;
                        if idx < 0 { 0.0 } else { tr.basal[idx as usize] + tr.bolus[idx as usize] / 3.0 }
                    })
                    .sum();
                assert!((st[t][IDX_INSULIN_MEANS + k] - iw / WINDOW_STEPS as f64).abs() < 1e-12);
            }
            let mb = if t == 0 { 0.0 } else { tr.basal[..t].iter().sum::<f64>() / t as f64 };
            assert!((st[t][IDX_MEAN_BASAL] - mb).abs() < 1e-12);
        }
    }

    #[test]
    fn single_state_matches_bulk() {
        let gs: Vec<f64> = (0..400).map(|i| 120.0 + 30.0 * (i as f64 / 20.0).sin()).collect();
        let mut tr = trace(&gs);
        for i in 0..400 {
            tr.basal[i] = 0.015 + 0.001 * ((i * 7) % 5) as f64;
        }
        tr.carbs[100] = 60.0;
        tr.bolus[100] = 3.0;
        let bulk = build_states(&tr, &params());
        for t in [0, 1, 50, 100, 101, 250, 399] {
            let s = build_state(&tr, t, &params());
            for d in 0..STATE_DIM {
                assert!((s[d] - bulk[t][d]).abs() < 1e-9, "t {t} dim {d}");
            }
        }
    }

    #[test]
    fn iob_non_increasing_after_last_dose() {
        let mut tr = trace(&[140.0; 150]);
        tr.bolus[10] = 4.0;
        let c = ActivityCurve::insulin();
        let v: Vec<f64> = (10..150).map(|t| iob(&tr, t, &c)).collect();
        assert_eq!(v[0], 4.0);
        assert!(v.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(*v.last().unwrap(), 0.0);
    }

    proptest! {
        #[test]
        fn shift_invariance(prefix in proptest::collection::vec(40.0f64..400.0, 0..50), seed in 0u64..1000) {
            let core: Vec<f64> = (0..120).map(|i| 100.0 + ((i as u64 * 31 + seed) % 97) as f64).collect();
            let a = trace(&core);
            let joined: Vec<f64> = prefix.iter().chain(&core).copied().collect();
            let b = trace(&joined);
            let sa = build_states(&a, &params());
            let sb = build_states(&b, &params());
            let (ta, tb) = (core.len() - 1, joined.len() - 1);
            for d in IDX_GLUCOSE..IDX_IOB {
                prop_assert!((sa[ta][d] - sb[tb][d]).abs() < 1e-9);
            }
        }

        #[test]
        fn normalization_round_trip(rows in proptest::collection::vec(proptest::collection::vec(-1e3f64..1e3, 4), 2..40)) {
            let nz = Normalizer::fit(&rows).unwrap();
            for r in &rows {
                let back = nz.denormalize(&nz.normalize(r));
                for (x, y) in r.iter().zip(&back) {
                    prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
                }
            }
        }
    }
}
