use super::dataset::Dataset;

/// An n-step transition starting at sample `t` of episode `episode`.
///
/// Rows index the flat sample table of the dataset (see
/// [`Dataset::offsets`]). Views never cross episode boundaries: near the end
/// of an episode the horizon shrinks to what is left.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionView {
    pub episode: usize,
    pub t: usize,
    pub row: usize,
    /// r_t .. r_{t+m-1}.
    pub rewards: Vec<f64>,
    /// Σ γ^k r_{t+k} over `rewards`.
    pub discounted_return: f64,
    /// Row of s_{t+m}; `None` when the view ends in a terminal state.
    pub bootstrap_row: Option<usize>,
    /// Whether the view reaches the last sample of its episode.
    pub episode_end: bool,
    /// Whether the view ends with a glucose-range exit (no bootstrap).
    pub terminal: bool,
}

impl TransitionView {
    pub fn horizon(&self) -> usize {
        self.rewards.len()
    }
}

/// Builds one view per transition `t -> t+1` of every episode.
///
/// `rewards[e][t]` is the reward of transition `t` in episode `e`, so each
/// inner vector has one entry fewer than the episode has samples.
pub fn assemble(dataset: &Dataset, rewards: &[Vec<f64>], n: usize, gamma: f64) -> Vec<TransitionView> {
    assert!(n >= 1, "n-step horizon must be >= 1");
    assert_eq!(rewards.len(), dataset.episodes.len(), "one reward vector per episode");
    let offsets = dataset.offsets();
    let mut views = Vec::with_capacity(dataset.total_samples());
    for (e, ep) in dataset.episodes.iter().enumerate() {
        let len = ep.len();
        if len < 2 {
            continue;
        }
        let r = &rewards[e];
        assert_eq!(r.len(), len - 1, "episode {e}: expected {} rewards", len - 1);
        for t in 0..len - 1 {
            let m = n.min(len - 1 - t);
            let list = r[t..t + m].to_vec();
            let mut disc = 0.0;
            let mut g = 1.0;
            for v in &list {
                disc += g * v;
                g *= gamma;
            }
            let episode_end = t + m == len - 1;
            let terminal = episode_end && ep.terminated;
            views.push(TransitionView {
                episode: e,
                t,
                row: offsets[e] + t,
                rewards: list,
                discounted_return: disc,
                bootstrap_row: (!terminal).then_some(offsets[e] + t + m),
                episode_end,
                terminal,
            });
        }
    }
    views
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Sample, Trajectory};
    use proptest::prelude::*;

    fn ep(id: u64, n: usize, terminated: bool) -> Trajectory {
        let mut t = Trajectory::new("adult", id, 0, 0.0);
        for i in 0..n {
            t.push(Sample {
                t: i as f64 * 3.0,
                glucose: 140.0,
                true_glucose: 140.0,
                basal: 0.01,
                bolus: 0.0,
                carbs: 0.0,
                cgm_depression: 0.0,
            });
        }
        t.terminated = terminated;
        t
    }

    #[test]
    fn one_step_views_hold_single_rewards() {
        let d = Dataset::new(vec![ep(0, 6, false)]);
        let r = vec![vec![1.0, 2.0, 3.0, 4.0, 5.0]];
        let v = assemble(&d, &r, 1, 0.9);
        assert_eq!(v.len(), 5);
        for (i, view) in v.iter().enumerate() {
            assert_eq!(view.rewards, vec![r[0][i]]);
            assert_eq!(view.bootstrap_row, Some(i + 1));
        }
    }

    #[test]
    fn short_episode_truncates_without_borrowing() {
        let d = Dataset::new(vec![ep(0, 5, false), ep(1, 5, true)]);
        let r = vec![vec![1.0; 4], vec![2.0; 4]];
        let v = assemble(&d, &r, 10, 0.99);
        assert_eq!(v.len(), 8);
        for view in &v {
            assert_eq!(view.horizon(), 4 - view.t);
            assert!(view.episode_end);
            let expected = if view.episode == 0 { 1.0 } else { 2.0 };
            assert!(view.rewards.iter().all(|&x| x == expected));
        }
        // truncated episode bootstraps at its last sample, terminated one does not
        assert!(v[..4].iter().all(|x| x.bootstrap_row == Some(4) && !x.terminal));
        assert!(v[4..].iter().all(|x| x.bootstrap_row.is_none() && x.terminal));
    }

    proptest! {
        #[test]
        fn discounted_sum_matches_brute_force(
            len in 2usize..60,
            n in 1usize..15,
            gamma in 0.0f64..1.0,
            seed in 0u64..1000,
        ) {
            let d = Dataset::new(vec![ep(0, len, seed % 2 == 0)]);
            let rewards: Vec<f64> = (0..len - 1)
                .map(|i| ((i as u64 * 2654435761 + seed) % 1000) as f64 / 500.0 - 1.0)
                .collect();
            let views = assemble(&d, &[rewards.clone()], n, gamma);
            for v in &views {
                let mut brute = 0.0;
                for k in 0..n {
                    if v.t + k >= len - 1 { break; }
                    brute += gamma.powi(k as i32) * rewards[v.t + k];
                }
                prop_assert!((brute - v.discounted_return).abs() < 1e-12);
            }
        }
    }
}
