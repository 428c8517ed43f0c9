use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::rng::Rng;
use crate::{Error, Result};

/// Index of the stratum holding `reward` when [-1, 1] is cut into `k`
/// equal-width bins (the top edge belongs to the last bin).
pub fn stratum_of(reward: f64, k: usize) -> usize {
    let x = ((reward.clamp(-1.0, 1.0) + 1.0) / 2.0 * k as f64).floor() as usize;
    x.min(k - 1)
}

/// Mini-batches that draw equally from every non-empty reward stratum.
///
/// Each batch gives `size / m` draws to each of the `m` non-empty strata and
/// hands the remainder to distinct strata chosen at random. Draws within a
/// stratum are uniform with replacement. With all labels in one stratum this
/// is plain uniform sampling.
#[derive(Debug, Clone)]
pub struct StratifiedSampler {
    strata: Vec<Vec<usize>>,
    rng: Rng,
}

impl StratifiedSampler {
    pub fn new(rewards: &[f64], k: usize, rng: Rng) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter("need at least one stratum".into()));
        }
        if rewards.is_empty() {
            return Err(Error::InsufficientLabels { got: 0, min: 1 });
        }
        let mut bins = vec![Vec::new(); k];
        for (i, &r) in rewards.iter().enumerate() {
            bins[stratum_of(r, k)].push(i);
        }
        Ok(Self {
            strata: bins.into_iter().filter(|b| !b.is_empty()).collect(),
            rng,
        })
    }

    /// Label indices of the non-empty strata, lowest rewards first.
    pub fn strata(&self) -> &[Vec<usize>] {
        &self.strata
    }

    /// Draws a batch of label indices.
    pub fn batch(&mut self, size: usize) -> Vec<usize> {
        let m = self.strata.len();
        let mut counts = vec![size / m; m];
        let mut order: Vec<usize> = (0..m).collect();
        order.shuffle(&mut self.rng);
        for &s in order.iter().take(size % m) {
            counts[s] += 1;
        }
        let mut out = Vec::with_capacity(size);
        for (s, &c) in counts.iter().enumerate() {
            let bin = &self.strata[s];
            for _ in 0..c {
                out.push(bin[self.rng.random_range(0..bin.len())]);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    #[test]
    fn strata_edges() {
        assert_eq!(stratum_of(-1.0, 10), 0);
        assert_eq!(stratum_of(1.0, 10), 9);
        assert_eq!(stratum_of(0.0, 10), 5);
        assert_eq!(stratum_of(-0.0001, 10), 4);
    }

    #[test]
    fn single_stratum_is_uniform() {
        let r = vec![0.3; 40];
        let mut s = StratifiedSampler::new(&r, 10, stream(0, Stream::Sampling)).unwrap();
        assert_eq!(s.strata().len(), 1);
        assert_eq!(s.batch(128).len(), 128);
    }

    #[test]
    fn imbalanced_two_strata_split_evenly() {
        let mut r = vec![-1.0; 1000];
        r.extend(vec![1.0; 10]);
        let mut s = StratifiedSampler::new(&r, 2, stream(1, Stream::Sampling)).unwrap();
        for _ in 0..50 {
            let b = s.batch(128);
            let hi = b.iter().filter(|&&i| i >= 1000).count();
            assert_eq!(hi, 64);
        }
    }

    #[test]
    fn empty_rejected() {
        assert!(StratifiedSampler::new(&[], 10, stream(0, Stream::Sampling)).is_err());
        assert!(StratifiedSampler::new(&[0.0], 0, stream(0, Stream::Sampling)).is_err());
    }
}
