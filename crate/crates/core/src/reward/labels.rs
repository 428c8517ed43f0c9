use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::rng::Rng;
use crate::{Error, Result};

/// A sketched reward for one dataset sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SketchLabel {
    pub episode_id: u64,
    pub t: usize,
    pub reward: f64,
}

impl SketchLabel {
    pub fn new(episode_id: u64, t: usize, reward: f64) -> Result<Self> {
        if !(-1.0..=1.0).contains(&reward) {
            return Err(Error::LabelOutOfRange(reward));
        }
        Ok(Self { episode_id, t, reward })
    }
}

/// Labels keyed by `(episode_id, t)`. Resubmitting an identical label is a
/// no-op; a different reward for an existing key is a conflict.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabelSet {
    labels: Vec<SketchLabel>,
    index: HashMap<(u64, usize), usize>,
}

impl LabelSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_labels(labels: impl IntoIterator<Item = SketchLabel>) -> Result<Self> {
        let mut set = Self::new();
        set.extend(labels)?;
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[SketchLabel] {
        &self.labels
    }

    pub fn get(&self, episode_id: u64, t: usize) -> Option<&SketchLabel> {
        self.index.get(&(episode_id, t)).map(|&i| &self.labels[i])
    }

    fn check(&self, l: &SketchLabel) -> Result<bool> {
        if !(-1.0..=1.0).contains(&l.reward) {
            return Err(Error::LabelOutOfRange(l.reward));
        }
        match self.get(l.episode_id, l.t) {
            Some(old) if old.reward == l.reward => Ok(false),
            Some(_) => Err(Error::ConflictingLabel {
                episode_id: l.episode_id,
                t: l.t,
            }),
            None => Ok(true),
        }
    }

    pub fn insert(&mut self, l: SketchLabel) -> Result<bool> {
        let fresh = self.check(&l)?;
        if fresh {
            self.index.insert((l.episode_id, l.t), self.labels.len());
            self.labels.push(l);
        }
        Ok(fresh)
    }

    /// Inserts all labels or none. Returns how many were new.
    pub fn extend(&mut self, labels: impl IntoIterator<Item = SketchLabel>) -> Result<usize> {
        let batch: Vec<SketchLabel> = labels.into_iter().collect();
        let mut staged = self.clone();
        let mut added = 0;
        for l in batch {
            added += staged.insert(l)? as usize;
        }
        *self = staged;
        Ok(added)
    }

    /// Every label must name an existing sample.
    pub fn validate_against(&self, dataset: &Dataset) -> Result<()> {
        for l in &self.labels {
            if dataset.row_of(l.episode_id, l.t).is_none() {
                return Err(Error::UnknownSample {
                    episode_id: l.episode_id,
                    t: l.t,
                });
            }
        }
        Ok(())
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.labels.iter().map(|l| l.reward).collect()
    }

    /// One JSON object per line.
    pub fn write_jsonl(&self, w: &mut impl Write) -> Result<()> {
        for l in &self.labels {
            serde_json::to_writer(&mut *w, l)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl(r: impl BufRead) -> Result<Self> {
        let mut out = Vec::new();
        for line in r.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            out.push(serde_json::from_str::<SketchLabel>(&line)?);
        }
        Self::from_labels(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_jsonl(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingArtifact(path.display().to_string()),
            _ => Error::Io(e),
        })?;
        Self::read_jsonl(std::io::BufReader::new(f))
    }
}

/// Adds Gaussian noise with std `multiple · σ`, σ the std of the labels, and
/// clamps back into [-1, 1].
pub fn add_label_noise(labels: &LabelSet, multiple: f64, rng: &mut Rng) -> LabelSet {
    let r = labels.rewards();
    let n = r.len().max(1) as f64;
    let mean = r.iter().sum::<f64>() / n;
    let sigma = (r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let noisy = labels.labels.iter().map(|l| {
        let z: f64 = StandardNormal.sample(rng);
        SketchLabel {
            reward: (l.reward + multiple * sigma * z).clamp(-1.0, 1.0),
            ..*l
        }
    });
    LabelSet::from_labels(noisy.collect::<Vec<_>>()).expect("noisy labels keep unique keys and range")
}
