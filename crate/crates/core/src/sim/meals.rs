use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::rng::Rng;
use crate::STEP_MIN;

const DAY_MIN: f64 = 1440.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MealSpec {
    pub mean_time_of_day_min: f64,
    pub std_time_min: f64,
    pub mean_carbs_g: f64,
    pub std_carbs_g: f64,
}

/// Daily meal plan; every day each slot is realised once with Gaussian
/// jitter on time and size.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MealSchedule {
    pub meals: Vec<MealSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MealEvent {
    /// Step index within the episode.
    pub step: usize,
    /// Slot index into [`MealSchedule::meals`].
    pub slot: usize,
    pub carbs_g: f64,
}

impl MealSchedule {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Draws the meal events of an episode of `days` days starting at
    /// `start_clock_min`, snapped to the step grid.
    pub fn realize(&self, days: usize, start_clock_min: f64, rng: &mut Rng) -> Vec<MealEvent> {
        let n_steps = days * crate::STEPS_PER_DAY;
        let mut events = Vec::new();
        for day in 0..=days {
            for (slot, m) in self.meals.iter().enumerate() {
                let zt: f64 = StandardNormal.sample(rng);
                let zc: f64 = StandardNormal.sample(rng);
                let tod = (m.mean_time_of_day_min + m.std_time_min * zt).clamp(0.0, DAY_MIN - STEP_MIN);
                let carbs = (m.mean_carbs_g + m.std_carbs_g * zc).max(0.0);
                let clock = day as f64 * DAY_MIN + tod;
                if clock < start_clock_min {
                    continue;
                }
                let step = ((clock - start_clock_min) / STEP_MIN).round() as usize;
                if step < n_steps && carbs > 0.0 {
                    events.push(MealEvent { step, slot, carbs_g: carbs });
                }
            }
        }
        events.sort_by_key(|e| e.step);
        events
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    fn plan() -> MealSchedule {
        MealSchedule {
            meals: vec![
                MealSpec { mean_time_of_day_min: 5.0, std_time_min: 60.0, mean_carbs_g: 2.0, std_carbs_g: 10.0 },
                MealSpec { mean_time_of_day_min: 1430.0, std_time_min: 60.0, mean_carbs_g: 60.0, std_carbs_g: 5.0 },
            ],
        }
    }

    #[test]
    fn events_inside_episode_and_non_negative() {
        let mut rng = stream(3, Stream::Meals);
        let ev = plan().realize(5, 0.0, &mut rng);
        assert!(!ev.is_empty());
        for e in &ev {
            assert!(e.step < 5 * crate::STEPS_PER_DAY);
            assert!(e.carbs_g > 0.0);
        }
        assert!(ev.windows(2).all(|w| w[0].step <= w[1].step));
    }

    #[test]
    fn realisation_is_seeded() {
        let a = plan().realize(3, 0.0, &mut stream(9, Stream::Meals));
        let b = plan().realize(3, 0.0, &mut stream(9, Stream::Meals));
        assert_eq!(a, b);
    }
}
