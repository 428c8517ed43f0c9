use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::codec::Cursor;
use crate::{Error, Result, STEP_MIN};

const MAGIC: &[u8; 8] = b"PNTTRJ\0\0";
pub const TRAJECTORY_VERSION: u32 = 1;
const COLUMNS: usize = 7;

/// One episode at 3-minute resolution. `glucose` is what the CGM reported
/// (and what controllers and labellers see); `true_glucose` is plasma
/// glucose. `cgm_depression` is the compression-low offset applied to the
/// reading at each sample.
///
/// A terminated episode ends with the out-of-range observation, whose action
/// columns are zero.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub patient_id: String,
    pub episode_id: u64,
    pub seed: u64,
    pub start_clock: f64,
    pub t: Vec<f64>,
    pub glucose: Vec<f64>,
    pub true_glucose: Vec<f64>,
    pub basal: Vec<f64>,
    pub bolus: Vec<f64>,
    pub carbs: Vec<f64>,
    pub cgm_depression: Vec<f64>,
    pub terminated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub glucose: f64,
    pub true_glucose: f64,
    pub basal: f64,
    pub bolus: f64,
    pub carbs: f64,
    pub cgm_depression: f64,
}

impl Trajectory {
    pub fn new(patient_id: impl Into<String>, episode_id: u64, seed: u64, start_clock: f64) -> Self {
        Self {
            patient_id: patient_id.into(),
            episode_id,
            seed,
            start_clock,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn push(&mut self, s: Sample) {
        self.t.push(s.t);
        self.glucose.push(s.glucose);
        self.true_glucose.push(s.true_glucose);
        self.basal.push(s.basal);
        self.bolus.push(s.bolus);
        self.carbs.push(s.carbs);
        self.cgm_depression.push(s.cgm_depression);
    }

    pub fn sample(&self, i: usize) -> Sample {
        Sample {
            t: self.t[i],
            glucose: self.glucose[i],
            true_glucose: self.true_glucose[i],
            basal: self.basal[i],
            bolus: self.bolus[i],
            carbs: self.carbs[i],
            cgm_depression: self.cgm_depression[i],
        }
    }

    /// Minutes after midnight of sample `i`.
    pub fn time_of_day(&self, i: usize) -> f64 {
        (self.start_clock + self.t[i]).rem_euclid(1440.0)
    }

    /// Checks column lengths and the 3-minute time grid.
    pub fn validate(&self) -> Result<()> {
        let n = self.t.len();
        let cols = [
            self.glucose.len(),
            self.true_glucose.len(),
            self.basal.len(),
            self.bolus.len(),
            self.carbs.len(),
            self.cgm_depression.len(),
        ];
        if let Some(&bad) = cols.iter().find(|&&c| c != n) {
            return Err(Error::DimensionMismatch { expected: n, got: bad });
        }
        for w in self.t.windows(2) {
            if ((w[1] - w[0]) - STEP_MIN).abs() > 1e-9 {
                return Err(Error::InvalidParameter(format!(
                    "trajectory time grid must advance by {STEP_MIN} min"
                )));
            }
        }
        Ok(())
    }

    fn columns(&self) -> [&Vec<f64>; COLUMNS] {
        [
            &self.t,
            &self.glucose,
            &self.true_glucose,
            &self.basal,
            &self.bolus,
            &self.carbs,
            &self.cgm_depression,
        ]
    }

    /// Little-endian columnar encoding; identical trajectories produce
    /// identical bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.len();
        let id = self.patient_id.as_bytes();
        let mut out = Vec::with_capacity(64 + id.len() + COLUMNS * 8 * n);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&TRAJECTORY_VERSION.to_le_bytes());
        out.extend_from_slice(&(id.len() as u16).to_le_bytes());
        out.extend_from_slice(id);
        out.extend_from_slice(&self.episode_id.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.start_clock.to_le_bytes());
        out.push(self.terminated as u8);
        out.extend_from_slice(&(n as u64).to_le_bytes());
        for col in self.columns() {
            for v in col {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Cursor::new(bytes, "trajectory");
        if r.take(8)? != MAGIC {
            return Err(Error::BadMagic("trajectory"));
        }
        let version = r.u32()?;
        if version != TRAJECTORY_VERSION {
            return Err(Error::VersionMismatch {
                kind: "trajectory",
                found: version,
                expected: TRAJECTORY_VERSION,
            });
        }
        let id_len = r.u16()? as usize;
        let patient_id = String::from_utf8(r.take(id_len)?.to_vec())
            .map_err(|_| Error::InvalidParameter("patient id is not utf-8".into()))?;
        let episode_id = r.u64()?;
        let seed = r.u64()?;
        let start_clock = r.f64()?;
        let terminated = r.take(1)?[0] != 0;
        let n = r.u64()? as usize;
        let remaining = r.remaining();
        if n.checked_mul(COLUMNS * 8) != Some(remaining) {
            return Err(Error::Truncated("trajectory"));
        }
        let mut col = || -> Result<Vec<f64>> { (0..n).map(|_| r.f64()).collect() };
        let traj = Trajectory {
            patient_id,
            episode_id,
            seed,
            start_clock,
            t: col()?,
            glucose: col()?,
            true_glucose: col()?,
            basal: col()?,
            bolus: col()?,
            carbs: col()?,
            cgm_depression: col()?,
            terminated,
        };
        traj.validate()?;
        Ok(traj)
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }

    /// CSV export: `t,glucose_mgdl,basal_u_min,bolus_u,carbs_g`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,glucose_mgdl,basal_u_min,bolus_u,carbs_g\n");
        for i in 0..self.len() {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                self.t[i], self.glucose[i], self.basal[i], self.bolus[i], self.carbs[i]
            ));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize) -> Trajectory {
        let mut tr = Trajectory::new("adult", 4, 99, 360.0);
        for i in 0..n {
            let x = i as f64;
            tr.push(Sample {
                t: x * STEP_MIN,
                glucose: 120.0 + x.sin() * 30.0,
                true_glucose: 121.0 + x.sin() * 30.0,
                basal: 0.01 + 1e-4 * x,
                bolus: if i % 50 == 0 { 2.5 } else { 0.0 },
                carbs: if i % 50 == 0 { 40.0 } else { 0.0 },
                cgm_depression: 0.0,
            });
        }
        tr
    }

    #[test]
    fn binary_round_trip() {
        let tr = toy(4800);
        let back = Trajectory::from_bytes(&tr.to_bytes()).unwrap();
        assert_eq!(tr, back);
    }

    #[test]
    fn corrupted_length_is_truncation() {
        let mut bytes = toy(20).to_bytes();
        // length field sits right before the columns
        let len_pos = bytes.len() - 20 * COLUMNS * 8 - 8;
        bytes[len_pos..len_pos + 8].copy_from_slice(&21u64.to_le_bytes());
        assert!(matches!(Trajectory::from_bytes(&bytes), Err(Error::Truncated(_))));
        let short = &toy(20).to_bytes()[..100];
        assert!(matches!(Trajectory::from_bytes(short), Err(Error::Truncated(_))));
    }

    #[test]
    fn version_and_magic_checked() {
        let mut bytes = toy(3).to_bytes();
        bytes[8..12].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(Trajectory::from_bytes(&bytes), Err(Error::VersionMismatch { found: 2, .. })));
        bytes[0] = b'X';
        assert!(matches!(Trajectory::from_bytes(&bytes), Err(Error::BadMagic(_))));
    }

    #[test]
    fn csv_has_header_and_rows() {
        let csv = toy(5).to_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "t,glucose_mgdl,basal_u_min,bolus_u,carbs_g");
        assert_eq!(lines.len(), 6);
        assert!(lines[1].starts_with("0,120,"));
    }

    #[test]
    fn time_of_day_wraps() {
        let tr = toy(500);
        assert_eq!(tr.time_of_day(0), 360.0);
        assert_eq!(tr.time_of_day(360), (360.0 + 1080.0) % 1440.0);
    }
}
