use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::Trajectory;
use crate::rng::Rng;
use crate::sim::{Controller, PatientParams, PidGains};

/// PID basal controller settings.
///
/// Every term raises insulin when glucose is high:
/// `a = k_p (g_t - g_targ) + k_i Σ (g_t' - g_targ) + k_d (g_t - g_{t-1})`.
/// The running sum is clamped to `±integral_clamp` after every update and
/// starts at `integral_init`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PidConfig {
    pub gains: PidGains,
    pub integral_init: f64,
    pub max_basal: f64,
    /// Per-episode multiplicative gain noise (fraction).
    pub param_noise_std: f64,
    pub action_ou_theta: f64,
    /// OU step deviation, as a fraction of `max_basal`.
    pub action_ou_sigma: f64,
}

impl PidConfig {
    /// Noisy demonstrator: 5% gain noise and OU action noise (θ = 0.15,
    /// σ = 6% of the pump cap). The integral starts where the controller
    /// outputs the equilibrium basal.
    pub fn demonstrator(params: &PatientParams, gains: PidGains) -> Self {
        Self {
            gains,
            integral_init: (params.basal_equilibrium_u_per_min / gains.k_i)
                .clamp(-gains.integral_clamp, gains.integral_clamp),
            max_basal: params.max_basal(),
            param_noise_std: 0.05,
            action_ou_theta: 0.15,
            action_ou_sigma: 0.06,
        }
    }

    pub fn noise_free(params: &PatientParams, gains: PidGains) -> Self {
        Self {
            param_noise_std: 0.0,
            action_ou_sigma: 0.0,
            ..Self::demonstrator(params, gains)
        }
    }

    pub fn with_target(mut self, g_targ: f64) -> Self {
        self.gains.g_targ_mgdl = g_targ;
        self
    }
}

/// Noise-free PID output for a glucose history (oldest first), clamped to
/// `[0, max_basal]`.
pub fn pid_action(glucose: &[f64], cfg: &PidConfig) -> f64 {
    let g = &cfg.gains;
    let Some(&last) = glucose.last() else {
        return 0.0;
    };
    let mut integral = cfg.integral_init;
    for &v in glucose {
        integral = (integral + v - g.g_targ_mgdl).clamp(-g.integral_clamp, g.integral_clamp);
    }
    let prev = if glucose.len() >= 2 { glucose[glucose.len() - 2] } else { last };
    let a = g.k_p * (last - g.g_targ_mgdl) + g.k_i * integral + g.k_d * (last - prev);
    a.clamp(0.0, cfg.max_basal)
}

/// Stateful PID with per-episode gain noise and Ornstein–Uhlenbeck action
/// noise.
#[derive(Debug, Clone)]
pub struct PidController {
    pub config: PidConfig,
    gains: PidGains,
    integral: f64,
    ou: f64,
}

impl PidController {
    pub fn new(config: PidConfig) -> Self {
        Self {
            config,
            gains: config.gains,
            integral: config.integral_init,
            ou: 0.0,
        }
    }

    /// Gains in effect for the current episode.
    pub fn episode_gains(&self) -> PidGains {
        self.gains
    }
}

impl Controller for PidController {
    fn reset(&mut self, _params: &PatientParams, rng: &mut Rng) {
        let base = self.config.gains;
        let s = self.config.param_noise_std;
        let mut perturb = |k: f64| {
            if s > 0.0 {
                let z: f64 = StandardNormal.sample(rng);
                (k * (1.0 + s * z)).max(0.0)
            } else {
                k
            }
        };
        self.gains = PidGains {
            k_p: perturb(base.k_p),
            k_i: perturb(base.k_i),
            k_d: perturb(base.k_d),
            ..base
        };
        self.integral = self.config.integral_init;
        self.ou = 0.0;
    }

    fn basal(&mut self, history: &Trajectory, t: usize, rng: &mut Rng) -> f64 {
        let g = &self.gains;
        let gt = history.glucose[t];
        let prev = if t > 0 { history.glucose[t - 1] } else { gt };
        self.integral = (self.integral + gt - g.g_targ_mgdl).clamp(-g.integral_clamp, g.integral_clamp);
        let mut a = g.k_p * (gt - g.g_targ_mgdl) + g.k_i * self.integral + g.k_d * (gt - prev);
        let sigma = self.config.action_ou_sigma * self.config.max_basal;
        if sigma > 0.0 {
            let z: f64 = StandardNormal.sample(rng);
            self.ou += -self.config.action_ou_theta * self.ou + sigma * z;
            a += self.ou;
        }
        a.clamp(0.0, self.config.max_basal)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Sample;
    use crate::rng::{stream, Stream};
    use crate::sim::{Cohort, PatientId};

    fn cfg() -> PidConfig {
        let prof = Cohort::builtin().get(PatientId::Adult).unwrap().clone();
        PidConfig::noise_free(&prof.params, prof.pid)
    }

    fn history(gs: &[f64]) -> Trajectory {
        let mut tr = Trajectory::new("adult", 0, 0, 0.0);
        for (i, &g) in gs.iter().enumerate() {
            tr.push(Sample {
                t: i as f64 * 3.0,
                glucose: g,
                true_glucose: g,
                basal: 0.0,
                bolus: 0.0,
                carbs: 0.0,
                cgm_depression: 0.0,
            });
        }
        tr
    }

    #[test]
    fn at_target_with_empty_integral_gives_zero() {
        let c = PidConfig { integral_init: 0.0, ..cfg() };
        let g = vec![c.gains.g_targ_mgdl; 200];
        assert_eq!(pid_action(&g, &c), 0.0);
    }

    #[test]
    fn high_glucose_gives_more_insulin() {
        let c = PidConfig { integral_init: 0.0, ..cfg() };
        let targ = c.gains.g_targ_mgdl;
        // no accumulated error before the current reading
        assert!(pid_action(&[targ, targ + 30.0], &c) > 0.0);
        let warm = cfg();
        assert!(pid_action(&[targ, targ + 20.0], &warm) > pid_action(&[targ, targ], &warm));
    }

    #[test]
    fn zero_noise_controller_matches_pure_function() {
        let c = cfg();
        let gs: Vec<f64> = (0..300).map(|i| 140.0 + 60.0 * (i as f64 / 25.0).sin()).collect();
        let tr = history(&gs);
        let mut ctrl = PidController::new(c);
        let mut rng = stream(0, Stream::Controller);
        ctrl.reset(&Cohort::builtin().patients[0].params, &mut rng);
        for t in 0..gs.len() {
            let a = ctrl.basal(&tr, t, &mut rng);
            assert!((a - pid_action(&gs[..=t], &c)).abs() < 1e-15);
        }
    }

    #[test]
    fn integral_is_clamped() {
        let c = cfg();
        let gs = vec![400.0; 5000];
        let mut integral = c.integral_init;
        for &g in &gs {
            integral = (integral + g - c.gains.g_targ_mgdl).clamp(-c.gains.integral_clamp, c.gains.integral_clamp);
        }
        assert!((c.gains.k_i * integral).abs() <= c.gains.k_i * c.gains.integral_clamp);
        let a = pid_action(&gs, &c);
        assert!(a <= c.max_basal && a >= 0.0);
    }

    #[test]
    fn outputs_never_negative_with_noise() {
        let prof = Cohort::builtin().get(PatientId::Child).unwrap().clone();
        let c = PidConfig::demonstrator(&prof.params, prof.pid);
        let gs: Vec<f64> = (0..2000).map(|i| 60.0 + (i % 300) as f64).collect();
        let tr = history(&gs);
        let mut ctrl = PidController::new(c);
        let mut rng = stream(9, Stream::Controller);
        ctrl.reset(&prof.params, &mut rng);
        assert_ne!(ctrl.episode_gains(), c.gains);
        for t in 0..gs.len() {
            let a = ctrl.basal(&tr, t, &mut rng);
            assert!(a >= 0.0 && a <= c.max_basal);
        }
    }
}
