use rand::Rng as _;

use crate::rng::Rng;

/// Uniform replay sampling with replacement over `0..len`.
#[derive(Debug, Clone)]
pub struct UniformSampler {
    len: usize,
    rng: Rng,
}

impl UniformSampler {
    pub fn new(len: usize, rng: Rng) -> Self {
        assert!(len > 0, "cannot sample from an empty set");
        Self { len, rng }
    }

    pub fn batch(&mut self, size: usize) -> Vec<usize> {
        (0..size).map(|_| self.rng.random_range(0..self.len)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    #[test]
    fn seeded_and_uniform() {
        let a = UniformSampler::new(50, stream(1, Stream::Sampling)).batch(100);
        let b = UniformSampler::new(50, stream(1, Stream::Sampling)).batch(100);
        assert_eq!(a, b);

        let n = 5;
        let draws = 100_000;
        let mut counts = vec![0usize; n];
        let mut s = UniformSampler::new(n, stream(2, Stream::Sampling));
        for i in s.batch(draws) {
            counts[i] += 1;
        }
        let expected = draws as f64 / n as f64;
        for c in counts {
            assert!(((c as f64 - expected) / expected).abs() < 0.02, "count {c}");
        }
    }
}
