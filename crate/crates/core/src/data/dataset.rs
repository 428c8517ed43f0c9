use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::trajectory::Trajectory;
use crate::{Error, Result};

/// A static offline dataset: whole episodes from one patient.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub episodes: Vec<Trajectory>,
}

impl Dataset {
    pub fn new(episodes: Vec<Trajectory>) -> Self {
        Self { episodes }
    }

    pub fn total_samples(&self) -> usize {
        self.episodes.iter().map(Trajectory::len).sum()
    }

    /// Flat row index of the first sample of each episode, plus the total.
    pub fn offsets(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.episodes.len() + 1);
        let mut acc = 0;
        for ep in &self.episodes {
            out.push(acc);
            acc += ep.len();
        }
        out.push(acc);
        out
    }

    pub fn position(&self, episode_id: u64) -> Option<usize> {
        self.episodes.iter().position(|e| e.episode_id == episode_id)
    }

    pub fn episode(&self, episode_id: u64) -> Option<&Trajectory> {
        self.episodes.iter().find(|e| e.episode_id == episode_id)
    }

    /// Flat row of `(episode_id, t)`, if it exists.
    pub fn row_of(&self, episode_id: u64, t: usize) -> Option<usize> {
        let offsets = self.offsets();
        let pos = self.position(episode_id)?;
        (t < self.episodes[pos].len()).then(|| offsets[pos] + t)
    }

    /// SHA-256 over the binary encoding of every episode, in order.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for ep in &self.episodes {
            h.update(ep.to_bytes());
        }
        hex::encode(h.finalize())
    }

    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for ep in &self.episodes {
            let path = dir.join(format!("ep_{:06}.traj", ep.episode_id));
            fs::write(path, ep.to_bytes())?;
        }
        Ok(())
    }

    /// Loads every `*.traj` file in `dir`, ordered by file name.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        if !dir.is_dir() {
            return Err(Error::MissingArtifact(format!("dataset directory {}", dir.display())));
        }
        let mut paths: Vec<_> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "traj"))
            .collect();
        paths.sort();
        let episodes = paths
            .iter()
            .map(|p| Trajectory::from_bytes(&fs::read(p)?))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { episodes })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Sample;

    fn ep(id: u64, n: usize) -> Trajectory {
        let mut t = Trajectory::new("child", id, id * 7, 0.0);
        for i in 0..n {
            t.push(Sample {
                t: i as f64 * 3.0,
                glucose: 100.0 + i as f64,
                true_glucose: 100.0 + i as f64,
                basal: 0.01,
                bolus: 0.0,
                carbs: 0.0,
                cgm_depression: 0.0,
            });
        }
        t
    }

    #[test]
    fn offsets_and_rows() {
        let d = Dataset::new(vec![ep(3, 5), ep(8, 7)]);
        assert_eq!(d.offsets(), vec![0, 5, 12]);
        assert_eq!(d.row_of(8, 2), Some(7));
        assert_eq!(d.row_of(8, 7), None);
        assert_eq!(d.row_of(4, 0), None);
    }

    #[test]
    fn save_load_and_hash() {
        let dir = tempfile::tempdir().unwrap();
        let d = Dataset::new(vec![ep(1, 30), ep(2, 40)]);
        d.save_dir(dir.path()).unwrap();
        let back = Dataset::load_dir(dir.path()).unwrap();
        assert_eq!(d, back);
        assert_eq!(d.hash(), back.hash());
        let other = Dataset::new(vec![ep(1, 30), ep(2, 41)]);
        assert_ne!(d.hash(), other.hash());
    }
}
