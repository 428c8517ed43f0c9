use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::rng::Rng;
use crate::sim::PatientParams;

/// Mealtime bolus calculator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BolusConfig {
    pub carb_ratio: f64,
    pub correction_factor: f64,
    pub g_targ_mgdl: f64,
    /// Correction is applied only if no carbs were eaten in this many
    /// preceding steps.
    pub carb_lookback_steps: usize,
    /// Half-width of the uniform relative carb-estimate error.
    pub carb_estimate_error_frac: f64,
}

impl BolusConfig {
    pub fn for_patient(params: &PatientParams, g_targ_mgdl: f64) -> Self {
        Self {
            carb_ratio: params.carb_ratio,
            correction_factor: params.correction_factor,
            g_targ_mgdl,
            carb_lookback_steps: 60,
            carb_estimate_error_frac: 0.2,
        }
    }
}

/// `B = ĉ/CR + [no recent carbs]·(g - g_targ)/CF`, clamped at zero, where
/// `ĉ = carbs·(1 + u)` and `u ~ Uniform(-e, e)`.
pub fn bolus(carbs_g: f64, g_mgdl: f64, recent_carbs_g: f64, cfg: &BolusConfig, rng: &mut Rng) -> f64 {
    let e = cfg.carb_estimate_error_frac;
    let u = e * (2.0 * rng.random::<f64>() - 1.0);
    let estimate = carbs_g * (1.0 + u);
    let correction = if recent_carbs_g > 0.0 {
        0.0
    } else {
        (g_mgdl - cfg.g_targ_mgdl) / cfg.correction_factor
    };
    (estimate / cfg.carb_ratio + correction).max(0.0)
}
