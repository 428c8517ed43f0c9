//! Magni risk and glycaemic summary statistics.

use serde::{Deserialize, Serialize};

use crate::data::Trajectory;
use crate::{Error, Result, STEP_MIN};

const C1: f64 = 3.5506;
const C2: f64 = 0.8353;
const C3: f64 = 3.7932;

/// `10·(c1·(ln(g)^c2 − c3))²`, minimised near 139 mg/dL.
pub fn magni_risk(g_mgdl: f64) -> Result<f64> {
    if !(g_mgdl > 0.0) {
        return Err(Error::InvalidParameter(format!("magni risk needs g > 0, got {g_mgdl}")));
    }
    Ok(magni_risk_unchecked(g_mgdl))
}

/// As [`magni_risk`], with the input floored at 1 mg/dL. For sensor and
/// simulator values that are positive by construction.
pub fn magni_risk_unchecked(g_mgdl: f64) -> f64 {
    let g = g_mgdl.max(1.0);
    let inner = C1 * (g.ln().powf(C2) - C3);
    10.0 * inner * inner
}

/// Closed-form minimiser of the Magni risk.
pub fn magni_minimum() -> f64 {
    C3.powf(1.0 / C2).exp()
}

/// Which event-anchored windows to score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreWindows {
    /// TIR window after each meal (minutes).
    pub post_meal_min: f64,
    /// CoV window after each compression event (minutes).
    pub post_event_min: f64,
    /// Mean-basal window after each compression event (minutes).
    pub post_event_basal_min: f64,
}

impl Default for ScoreWindows {
    fn default() -> Self {
        Self {
            post_meal_min: 240.0,
            post_event_min: 480.0,
            post_event_basal_min: 60.0,
        }
    }
}

/// Per-episode summary, computed on plasma glucose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeReport {
    pub samples: usize,
    pub mean_glucose: f64,
    pub median_glucose: f64,
    /// Σ risk over samples.
    pub magni_risk_sum: f64,
    /// Negated risk sum: the reward, higher is better.
    pub magni_total: f64,
    pub tir_pct: f64,
    pub tbr_pct: f64,
    pub tar_pct: f64,
    pub cov_pct: f64,
    pub mean_basal: f64,
    pub terminated: bool,
    /// Median over meals of TIR in the window after the meal.
    pub post_meal_tir_pct: Option<f64>,
    /// Median over compression events of CoV in the window after onset.
    pub post_event_cov_pct: Option<f64>,
    /// Median over compression events of mean basal after onset.
    pub post_event_basal: Option<f64>,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Population coefficient of variation in percent.
pub fn cov_pct(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64;
    100.0 * var.sqrt() / m
}

/// Percent of samples in [70, 180] mg/dL (inclusive).
pub fn tir_pct(xs: &[f64]) -> f64 {
    100.0 * xs.iter().filter(|&&g| (70.0..=180.0).contains(&g)).count() as f64 / xs.len() as f64
}

pub fn tbr_pct(xs: &[f64]) -> f64 {
    100.0 * xs.iter().filter(|&&g| g < 70.0).count() as f64 / xs.len() as f64
}

pub fn tar_pct(xs: &[f64]) -> f64 {
    100.0 * xs.iter().filter(|&&g| g > 180.0).count() as f64 / xs.len() as f64
}

/// Sample indices where a compression event starts.
pub fn compression_onsets(traj: &Trajectory) -> Vec<usize> {
    (0..traj.len())
        .filter(|&i| traj.cgm_depression[i] > 0.0 && (i == 0 || traj.cgm_depression[i - 1] <= 0.0))
        .map(|i| i.saturating_sub(1))
        .collect()
}

pub fn meal_indices(traj: &Trajectory) -> Vec<usize> {
    (0..traj.len()).filter(|&i| traj.carbs[i] > 0.0).collect()
}

fn window(len: usize, start: usize, minutes: f64) -> std::ops::Range<usize> {
    let n = (minutes / STEP_MIN).round() as usize;
    start..(start + n).min(len)
}

pub fn score(traj: &Trajectory, windows: &ScoreWindows) -> Result<EpisodeReport> {
    if traj.is_empty() {
        return Err(Error::InvalidParameter("cannot score an empty trajectory".into()));
    }
    let g = &traj.true_glucose;
    let risk: f64 = g.iter().map(|&v| magni_risk_unchecked(v)).sum();

    let post_meal: Vec<f64> = meal_indices(traj)
        .into_iter()
        .map(|i| window(g.len(), i, windows.post_meal_min))
        .filter(|r| r.len() > 1)
        .map(|r| tir_pct(&g[r]))
        .collect();
    let onsets = compression_onsets(traj);
    let post_cov: Vec<f64> = onsets
        .iter()
        .map(|&i| window(g.len(), i, windows.post_event_min))
        .filter(|r| r.len() > 1)
        .map(|r| cov_pct(&g[r]))
        .collect();
    let post_basal: Vec<f64> = onsets
        .iter()
        .map(|&i| window(g.len(), i, windows.post_event_basal_min))
        .filter(|r| !r.is_empty())
        .map(|r| mean(&traj.basal[r]))
        .collect();

    Ok(EpisodeReport {
        samples: g.len(),
        mean_glucose: mean(g),
        median_glucose: median(g).unwrap_or(f64::NAN),
        magni_risk_sum: risk,
        magni_total: -risk,
        tir_pct: tir_pct(g),
        tbr_pct: tbr_pct(g),
        tar_pct: tar_pct(g),
        cov_pct: cov_pct(g),
        mean_basal: mean(&traj.basal),
        terminated: traj.terminated,
        post_meal_tir_pct: median(&post_meal),
        post_event_cov_pct: median(&post_cov),
        post_event_basal: median(&post_basal),
    })
}
