use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::model::SimState;
use crate::rng::Rng;

/// AR(1) sensor error model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CgmConfig {
    /// Stationary standard deviation (mg/dL).
    pub noise_std: f64,
    pub correlation: f64,
}

impl Default for CgmConfig {
    fn default() -> Self {
        Self {
            noise_std: 2.0,
            correlation: 0.7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CgmSensor {
    config: CgmConfig,
    error: Option<f64>,
}

impl CgmSensor {
    pub fn new(config: CgmConfig) -> Self {
        Self { config, error: None }
    }

    fn next_error(&mut self, rng: &mut Rng) -> f64 {
        let sigma = self.config.noise_std;
        if sigma <= 0.0 {
            return 0.0;
        }
        let z: f64 = StandardNormal.sample(rng);
        let e = match self.error {
            None => sigma * z,
            Some(prev) => {
                let rho = self.config.correlation;
                rho * prev + (1.0 - rho * rho).sqrt() * sigma * z
            }
        };
        self.error = Some(e);
        e
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultMode {
    None,
    CompressionLow,
}

/// Nightly compression-low generator. Draw ranges are uniform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultInjector {
    pub mode: FaultMode,
    pub nightly_probability: f64,
    /// Night window start (minutes after midnight) and length.
    pub window_start_min: f64,
    pub window_len_min: f64,
    pub drop_depth_mgdl: (f64, f64),
    pub drop_duration_min: (f64, f64),
    pub rebound_duration_min: (f64, f64),
}

impl FaultInjector {
    pub fn none() -> Self {
        Self {
            mode: FaultMode::None,
            ..Self::compression_lows()
        }
    }

    pub fn compression_lows() -> Self {
        Self {
            mode: FaultMode::CompressionLow,
            nightly_probability: 0.3,
            window_start_min: 0.0,
            window_len_min: 360.0,
            drop_depth_mgdl: (30.0, 50.0),
            drop_duration_min: (20.0, 40.0),
            rebound_duration_min: (20.0, 40.0),
        }
    }

    /// Realises the events of one episode. Nights are indexed from the
    /// midnight at or before `start_clock_min`.
    pub fn schedule(&self, days: usize, start_clock_min: f64, rng: &mut Rng) -> FaultSchedule {
        let mut events = Vec::new();
        if self.mode == FaultMode::CompressionLow {
            let first_night = (start_clock_min / 1440.0).floor() as i64;
            for night in first_night..=first_night + days as i64 {
                let hit = rng.random::<f64>() < self.nightly_probability;
                let offset = rng.random::<f64>() * self.window_len_min;
                let depth = uniform(rng, self.drop_depth_mgdl);
                let drop = uniform(rng, self.drop_duration_min);
                let rebound = uniform(rng, self.rebound_duration_min);
                if hit {
                    events.push(CompressionEvent {
                        onset_min: night as f64 * 1440.0 + self.window_start_min + offset,
                        depth_mgdl: depth,
                        drop_min: drop,
                        rebound_min: rebound,
                    });
                }
            }
        }
        FaultSchedule { events }
    }
}

fn uniform(rng: &mut Rng, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// A false CGM drop: linear onset to full depth, then linear rebound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompressionEvent {
    pub onset_min: f64,
    pub depth_mgdl: f64,
    pub drop_min: f64,
    pub rebound_min: f64,
}

impl CompressionEvent {
    pub fn depression_at(&self, clock_min: f64) -> f64 {
        let dt = clock_min - self.onset_min;
        if dt < 0.0 {
            0.0
        } else if dt < self.drop_min {
            self.depth_mgdl * dt / self.drop_min
        } else if dt < self.drop_min + self.rebound_min {
            self.depth_mgdl * (1.0 - (dt - self.drop_min) / self.rebound_min)
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FaultSchedule {
    pub events: Vec<CompressionEvent>,
}

impl FaultSchedule {
    pub fn depression_at(&self, clock_min: f64) -> f64 {
        self.events
            .iter()
            .map(|e| e.depression_at(clock_min))
            .fold(0.0, f64::max)
    }
}

/// Sensor reading: true glucose plus AR(1) noise minus any active
/// compression depression, clamped to the sensor range [1, 1000]. Only the
/// reading is perturbed; the patient state is untouched.
pub fn read_cgm(state: &SimState, sensor: &mut CgmSensor, faults: &FaultSchedule, rng: &mut Rng) -> f64 {
    let noise = sensor.next_error(rng);
    let depression = faults.depression_at(state.clock_min);
    (state.plasma_glucose_mgdl + noise - depression).clamp(1.0, 1000.0)
}
