//! Simulated patient preferences: functions from a dataset sample to a raw
//! score, min-max normalised over the labelled subset into sketch labels.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Trajectory};
use crate::metrics::magni_risk_unchecked;
use crate::reward::{LabelSet, SketchLabel};
use crate::rng::Rng;
use crate::{Error, Result, STEP_MIN};

/// Steps back for the glucose change Δg (30 minutes).
pub const DELTA_STEPS: usize = 10;
/// Steps back for the rapid-change trigger of the compression preference.
pub const COMPRESSION_STEPS: usize = 5;
/// Glucose change (mg/dL) over [`COMPRESSION_STEPS`] that counts as rapid.
pub const COMPRESSION_THRESHOLD: f64 = 15.0;
/// Length of the pre-meal window rewarded by the mealtime preference.
pub const PRE_MEAL_MIN: f64 = 120.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Preference {
    /// −(g − 125)⁴
    Tir1,
    /// 1 inside (70, 180), else 0
    Tir2,
    /// a
    Tir3,
    /// −risk(g)²
    Tbr1,
    /// 1 above 70, else 0
    Tbr2,
    /// −a
    Tbr3,
    /// −|g − 144|
    Cov1,
    /// −(g − ḡ)² above 70, else the worst such penalty in the subset
    Cov2,
    /// −|Δg|
    Cov3,
    /// a² in the two hours before a mean mealtime, else 0
    Mealtime,
    /// a² while glucose moves more than 15 mg/dL over 5 steps, else 0
    Compression,
    /// −|g − c|
    Target(f64),
}

impl Preference {
    /// The nine labelling strategies.
    pub const STRATEGIES: [Preference; 9] = [
        Preference::Tir1,
        Preference::Tir2,
        Preference::Tir3,
        Preference::Tbr1,
        Preference::Tbr2,
        Preference::Tbr3,
        Preference::Cov1,
        Preference::Cov2,
        Preference::Cov3,
    ];

    pub fn name(&self) -> String {
        match self {
            Preference::Tir1 => "tir1".into(),
            Preference::Tir2 => "tir2".into(),
            Preference::Tir3 => "tir3".into(),
            Preference::Tbr1 => "tbr1".into(),
            Preference::Tbr2 => "tbr2".into(),
            Preference::Tbr3 => "tbr3".into(),
            Preference::Cov1 => "cov1".into(),
            Preference::Cov2 => "cov2".into(),
            Preference::Cov3 => "cov3".into(),
            Preference::Mealtime => "mealtime".into(),
            Preference::Compression => "compression".into(),
            Preference::Target(c) => format!("target:{c}"),
        }
    }
}

impl fmt::Display for Preference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Preference {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        if let Some(c) = lower.strip_prefix("target:") {
            let c: f64 = c.parse().map_err(|_| Error::UnknownPreference(s.into()))?;
            return Ok(Preference::Target(c));
        }
        Ok(match lower.as_str() {
            "tir1" => Preference::Tir1,
            "tir2" => Preference::Tir2,
            "tir3" => Preference::Tir3,
            "tbr1" => Preference::Tbr1,
            "tbr2" => Preference::Tbr2,
            "tbr3" => Preference::Tbr3,
            "cov1" => Preference::Cov1,
            "cov2" => Preference::Cov2,
            "cov3" => Preference::Cov3,
            "mealtime" => Preference::Mealtime,
            "compression" => Preference::Compression,
            _ => return Err(Error::UnknownPreference(s.into())),
        })
    }
}

/// Subset-level quantities some preferences need.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LabelContext {
    pub mean_glucose: f64,
    /// Hypo penalty: the largest (g − ḡ)² in the subset.
    pub hypo_penalty: f64,
    /// Mean time of day (minutes) of each meal slot.
    pub mealtimes: Vec<f64>,
}

/// A contiguous run of samples `[start, end)` of one episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub episode: usize,
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

/// Mean time of day of the meals in `segments`, one entry per nominal slot;
/// each meal joins the slot with the nearest nominal time. Slots with no
/// meals keep their nominal time.
pub fn mean_mealtimes(dataset: &Dataset, segments: &[Segment], nominal: &[f64]) -> Vec<f64> {
    let mut sum = vec![0.0; nominal.len()];
    let mut count = vec![0usize; nominal.len()];
    for seg in segments {
        let ep = &dataset.episodes[seg.episode];
        for t in seg.start..seg.end {
            if ep.carbs[t] > 0.0 {
                let tod = ep.time_of_day(t);
                let slot = (0..nominal.len())
                    .min_by(|&a, &b| (tod - nominal[a]).abs().total_cmp(&(tod - nominal[b]).abs()))
                    .expect("at least one slot");
                sum[slot] += tod;
                count[slot] += 1;
            }
        }
    }
    (0..nominal.len())
        .map(|s| if count[s] > 0 { sum[s] / count[s] as f64 } else { nominal[s] })
        .collect()
}

pub fn context(dataset: &Dataset, segments: &[Segment], nominal_mealtimes: &[f64]) -> LabelContext {
    let gs: Vec<f64> = segments
        .iter()
        .flat_map(|s| dataset.episodes[s.episode].glucose[s.start..s.end].iter().copied())
        .collect();
    let mean = gs.iter().sum::<f64>() / gs.len().max(1) as f64;
    let hypo_penalty = gs.iter().map(|g| (g - mean).powi(2)).fold(0.0, f64::max);
    LabelContext {
        mean_glucose: mean,
        hypo_penalty,
        mealtimes: mean_mealtimes(dataset, segments, nominal_mealtimes),
    }
}

fn in_pre_meal_window(tod: f64, mealtimes: &[f64]) -> bool {
    mealtimes.iter().any(|&m| {
        // minutes until the mealtime, wrapping across midnight
        let ahead = (m - tod).rem_euclid(1440.0);
        ahead > 0.0 && ahead <= PRE_MEAL_MIN
    })
}

/// Raw preference score of sample `t` of `traj`, before normalisation.
pub fn raw_value(pref: Preference, traj: &Trajectory, t: usize, ctx: &LabelContext) -> f64 {
    let g = traj.glucose[t];
    let a = traj.basal[t];
    let back = |k: usize| traj.glucose[t.saturating_sub(k)];
    match pref {
        Preference::Tir1 => -(g - 125.0).powi(4),
        Preference::Tir2 => (g > 70.0 && g < 180.0) as u8 as f64,
        Preference::Tir3 => a,
        Preference::Tbr1 => -magni_risk_unchecked(g).powi(2),
        Preference::Tbr2 => (g > 70.0) as u8 as f64,
        Preference::Tbr3 => -a,
        Preference::Cov1 => -(g - 144.0).abs(),
        Preference::Cov2 => {
            if g > 70.0 {
                -(g - ctx.mean_glucose).powi(2)
            } else {
                -ctx.hypo_penalty
            }
        }
        Preference::Cov3 => -(g - back(DELTA_STEPS)).abs(),
        Preference::Mealtime => {
            if in_pre_meal_window(traj.time_of_day(t), &ctx.mealtimes) {
                a * a
            } else {
                0.0
            }
        }
        Preference::Compression => {
            if (g - back(COMPRESSION_STEPS)).abs() > COMPRESSION_THRESHOLD {
                a * a
            } else {
                0.0
            }
        }
        Preference::Target(c) => -(g - c).abs(),
    }
}

/// Affine map of `xs` onto [-1, 1] (min → −1, max → +1). A constant subset
/// maps to its value clamped into the range.
pub fn min_max_normalize(xs: &[f64]) -> Vec<f64> {
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return xs.iter().map(|v| v.clamp(-1.0, 1.0)).collect();
    }
    xs.iter().map(|v| (2.0 * (v - lo) / (hi - lo) - 1.0).clamp(-1.0, 1.0)).collect()
}

/// How a simulated labeller corrupts its own labels.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Corruption {
    /// Fraction of samples whose raw score is negated.
    pub negate_frac: f64,
}

/// Picks contiguous segments totalling `n` labelable samples: episodes in a
/// seeded random order, each contributing a random window until the budget
/// is spent. The last sample of an episode has no action and is never
/// labelled.
pub fn pick_segments(dataset: &Dataset, n: usize, rng: &mut Rng) -> Result<Vec<Segment>> {
    let usable: Vec<usize> = dataset.episodes.iter().map(|e| e.len().saturating_sub(1)).collect();
    let total: usize = usable.iter().sum();
    if n > total {
        return Err(Error::InvalidParameter(format!(
            "asked for {n} labels but the dataset has {total} labelable samples"
        )));
    }
    let mut order: Vec<usize> = (0..dataset.episodes.len()).collect();
    order.shuffle(rng);
    let mut left = n;
    let mut out = Vec::new();
    for e in order {
        if left == 0 {
            break;
        }
        let take = left.min(usable[e]);
        if take == 0 {
            continue;
        }
        let start = rng.random_range(0..=usable[e] - take);
        out.push(Segment {
            episode: e,
            start,
            end: start + take,
        });
        left -= take;
    }
    out.sort_by_key(|s| (s.episode, s.start));
    Ok(out)
}

/// Labels every sample in `segments` with the normalised preference.
pub fn label_segments(
    pref: Preference,
    dataset: &Dataset,
    segments: &[Segment],
    nominal_mealtimes: &[f64],
    corruption: Corruption,
    rng: &mut Rng,
) -> Result<LabelSet> {
    let ctx = context(dataset, segments, nominal_mealtimes);
    let mut keys = Vec::new();
    let mut raw = Vec::new();
    for seg in segments {
        let ep = &dataset.episodes[seg.episode];
        for t in seg.start..seg.end {
            keys.push((ep.episode_id, t));
            raw.push(raw_value(pref, ep, t, &ctx));
        }
    }
    if corruption.negate_frac > 0.0 {
        let k = (corruption.negate_frac * raw.len() as f64).round() as usize;
        let mut idx: Vec<usize> = (0..raw.len()).collect();
        idx.shuffle(rng);
        for &i in &idx[..k.min(raw.len())] {
            raw[i] = -raw[i];
        }
    }
    if let Some(bad) = raw.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(format!("{pref} produced a non-finite score {bad}")));
    }
    let norm = min_max_normalize(&raw);
    LabelSet::from_labels(
        keys.into_iter()
            .zip(norm)
            .map(|((e, t), r)| SketchLabel { episode_id: e, t, reward: r })
            .collect::<Vec<_>>(),
    )
}

/// Meal time of day (minutes) from step-aligned clock positions.
pub fn nominal_mealtimes(schedule: &crate::sim::MealSchedule) -> Vec<f64> {
    schedule
        .meals
        .iter()
        .map(|m| (m.mean_time_of_day_min / STEP_MIN).round() * STEP_MIN)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Sample;
    use crate::rng::{stream, Stream};
    use proptest::prelude::*;

    fn traj(gs: &[f64], basal: f64) -> Trajectory {
        let mut tr = Trajectory::new("adult", 0, 0, 0.0);
        for (i, &g) in gs.iter().enumerate() {
            tr.push(Sample {
                t: i as f64 * 3.0,
                glucose: g,
                true_glucose: g,
                basal,
                bolus: 0.0,
                carbs: 0.0,
                cgm_depression: 0.0,
            });
        }
        tr
    }

    fn at(pref: Preference, g: f64) -> f64 {
        raw_value(pref, &traj(&[g], 0.02), 0, &LabelContext::default())
    }

    #[test]
    fn names_round_trip() {
        for p in Preference::STRATEGIES.into_iter().chain([Preference::Mealtime, Preference::Compression, Preference::Target(120.0)]) {
            assert_eq!(p.name().parse::<Preference>().unwrap(), p);
        }
        assert!(matches!("tir9".parse::<Preference>(), Err(Error::UnknownPreference(_))));
    }

    #[test]
    fn strategy_values() {
        assert_eq!(at(Preference::Tir2, 100.0), 1.0);
        assert_eq!(at(Preference::Tir2, 200.0), 0.0);
        assert_eq!(at(Preference::Tir2, 180.0), 0.0);
        assert_eq!(at(Preference::Tir1, 125.0), 0.0);
        assert!(at(Preference::Tir1, 130.0) < 0.0);
        assert_eq!(at(Preference::Tbr2, 71.0), 1.0);
        assert_eq!(at(Preference::Tbr2, 70.0), 0.0);
        assert!(at(Preference::Tbr1, 50.0) < at(Preference::Tbr1, 140.0));
        assert_eq!(at(Preference::Cov1, 144.0), 0.0);
    }

    #[test]
    fn cov3_symmetry() {
        let up: Vec<f64> = (0..11).map(|i| 140.0 + 2.0 * i as f64).collect();
        let down: Vec<f64> = (0..11).map(|i| 140.0 - 2.0 * i as f64).collect();
        let ctx = LabelContext::default();
        let a = raw_value(Preference::Cov3, &traj(&up, 0.0), 10, &ctx);
        let b = raw_value(Preference::Cov3, &traj(&down, 0.0), 10, &ctx);
        assert_eq!(a, -20.0);
        assert_eq!(a, b);
        assert_eq!(raw_value(Preference::Cov3, &traj(&[140.0; 11], 0.0), 10, &ctx), 0.0);
    }

    #[test]
    fn cov2_hypo_penalty_is_worst_case() {
        let gs = [60.0, 100.0, 140.0, 250.0];
        let tr = traj(&gs, 0.0);
        let ds = Dataset::new(vec![tr.clone()]);
        let seg = [Segment { episode: 0, start: 0, end: 4 }];
        let ctx = context(&ds, &seg, &[]);
        let vals: Vec<f64> = (0..4).map(|t| raw_value(Preference::Cov2, &tr, t, &ctx)).collect();
        assert_eq!(vals[0], vals.iter().copied().fold(f64::INFINITY, f64::min));
        assert!((ctx.mean_glucose - 137.5).abs() < 1e-12);
    }

    #[test]
    fn monotone_in_action() {
        let ctx = LabelContext::default();
        let v = |p, a| raw_value(p, &traj(&[140.0], a), 0, &ctx);
        assert!(v(Preference::Tir3, 0.02) > v(Preference::Tir3, 0.01));
        assert!(v(Preference::Tbr3, 0.02) < v(Preference::Tbr3, 0.01));
    }

    #[test]
    fn mealtime_zero_outside_windows() {
        let tr = traj(&vec![140.0; 480], 0.02);
        let ctx = LabelContext {
            mealtimes: vec![420.0, 750.0],
            ..Default::default()
        };
        for t in 0..480 {
            let tod = tr.time_of_day(t);
            let v = raw_value(Preference::Mealtime, &tr, t, &ctx);
            let inside = (300.0..420.0).contains(&tod) || (630.0..750.0).contains(&tod);
            assert_eq!(v > 0.0, inside, "tod {tod}");
        }
    }

    #[test]
    fn compression_trigger() {
        let mut gs = vec![140.0; 20];
        for (k, g) in gs.iter_mut().enumerate().skip(10) {
            *g = 140.0 - 5.0 * (k - 9) as f64;
        }
        let tr = traj(&gs, 0.01);
        let ctx = LabelContext::default();
        assert_eq!(raw_value(Preference::Compression, &tr, 5, &ctx), 0.0);
        assert!(raw_value(Preference::Compression, &tr, 15, &ctx) > 0.0);
    }

    #[test]
    fn segments_budget_and_bounds() {
        let eps: Vec<Trajectory> = (0..5)
            .map(|e| {
                let mut t = traj(&vec![140.0; 960], 0.01);
                t.episode_id = e;
                t
            })
            .collect();
        let ds = Dataset::new(eps);
        let mut rng = stream(4, Stream::Labels);
        let segs = pick_segments(&ds, 1000, &mut rng).unwrap();
        assert_eq!(segs.iter().map(Segment::len).sum::<usize>(), 1000);
        assert!(segs.len() <= 2);
        assert!(segs.iter().all(|s| s.end < 960));
        assert!(pick_segments(&ds, 5 * 959 + 1, &mut rng).is_err());
    }

    #[test]
    fn corruption_negates_fraction() {
        let gs: Vec<f64> = (0..200).map(|i| 80.0 + i as f64).collect();
        let ds = Dataset::new(vec![traj(&gs, 0.01)]);
        let seg = [Segment { episode: 0, start: 0, end: 200 }];
        let mut rng = stream(0, Stream::Labels);
        let clean = label_segments(Preference::Cov1, &ds, &seg, &[], Corruption::default(), &mut rng).unwrap();
        let bad = label_segments(Preference::Cov1, &ds, &seg, &[], Corruption { negate_frac: 1.0 }, &mut rng).unwrap();
        // full negation reverses the ranking
        let c = clean.rewards();
        let b = bad.rewards();
        let argmax = |v: &[f64]| (0..v.len()).max_by(|&i, &j| v[i].total_cmp(&v[j])).unwrap();
        let argmin = |v: &[f64]| (0..v.len()).min_by(|&i, &j| v[i].total_cmp(&v[j])).unwrap();
        assert_eq!(argmax(&c), argmin(&b));
    }

    proptest! {
        #[test]
        fn normalization_is_affine_and_bounded(xs in proptest::collection::vec(-1e6f64..1e6, 2..100)) {
            let n = min_max_normalize(&xs);
            prop_assert!(n.iter().all(|v| (-1.0..=1.0).contains(v)));
            let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if hi > lo {
                for (x, y) in xs.iter().zip(&n) {
                    if *x == hi { prop_assert_eq!(*y, 1.0); }
                    if *x == lo { prop_assert_eq!(*y, -1.0); }
                }
                for i in 0..xs.len() {
                    for j in 0..xs.len() {
                        if xs[i] < xs[j] { prop_assert!(n[i] <= n[j]); }
                    }
                }
            }
        }

        #[test]
        fn cov1_unimodal(a in 40.0f64..400.0, b in 40.0f64..400.0) {
            let (va, vb) = (at(Preference::Cov1, a), at(Preference::Cov1, b));
            if (a - 144.0).abs() < (b - 144.0).abs() { prop_assert!(va > vb); }
        }
    }
}
