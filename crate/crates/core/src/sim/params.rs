use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::meals::MealSchedule;
use crate::{Error, Result};

/// Versioned cohort file shipped with the crate.
pub const DEFAULT_COHORT_TOML: &str = include_str!("../../config/patients.toml");

const COHORT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PatientId {
    Adult,
    Adolescent,
    Child,
}

impl PatientId {
    pub const ALL: [PatientId; 3] = [PatientId::Adult, PatientId::Adolescent, PatientId::Child];

    pub fn as_str(self) -> &'static str {
        match self {
            PatientId::Adult => "adult",
            PatientId::Adolescent => "adolescent",
            PatientId::Child => "child",
        }
    }
}

impl fmt::Display for PatientId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PatientId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "adult" => Ok(PatientId::Adult),
            "adolescent" => Ok(PatientId::Adolescent),
            "child" => Ok(PatientId::Child),
            _ => Err(Error::UnknownPatient(s.to_string())),
        }
    }
}

/// Physiological and bolus-calculator parameters of one virtual patient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientParams {
    pub id: PatientId,
    pub weight_kg: f64,
    pub basal_equilibrium_u_per_min: f64,
    pub fasting_glucose_mgdl: f64,
    /// S_I, remote action gained per mU/L of plasma insulin (1/min per mU/L).
    pub insulin_sensitivity: f64,
    /// S_G (1/min).
    pub glucose_effectiveness: f64,
    /// p2 (1/min).
    pub insulin_action_rate: f64,
    /// k_e (1/min).
    pub insulin_clearance: f64,
    pub t_max_insulin_min: f64,
    pub t_max_meal_min: f64,
    pub carb_bioavailability: f64,
    /// CR (g/U).
    pub carb_ratio: f64,
    /// CF (mg/dL per U).
    pub correction_factor: f64,
    /// V_G (dL/kg).
    pub distribution_volume_glucose: f64,
    /// V_I (L/kg).
    pub distribution_volume_insulin: f64,
}

impl PatientParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("weight_kg", self.weight_kg),
            ("basal_equilibrium_u_per_min", self.basal_equilibrium_u_per_min),
            ("fasting_glucose_mgdl", self.fasting_glucose_mgdl),
            ("insulin_sensitivity", self.insulin_sensitivity),
            ("glucose_effectiveness", self.glucose_effectiveness),
            ("insulin_action_rate", self.insulin_action_rate),
            ("insulin_clearance", self.insulin_clearance),
            ("t_max_insulin_min", self.t_max_insulin_min),
            ("t_max_meal_min", self.t_max_meal_min),
            ("carb_ratio", self.carb_ratio),
            ("correction_factor", self.correction_factor),
            ("distribution_volume_glucose", self.distribution_volume_glucose),
            ("distribution_volume_insulin", self.distribution_volume_insulin),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(self.carb_bioavailability > 0.0 && self.carb_bioavailability <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "carb_bioavailability must be in (0, 1], got {}",
                self.carb_bioavailability
            )));
        }
        Ok(())
    }

    /// Plasma insulin (mU/L) sustained by a constant infusion (U/min).
    pub fn steady_plasma_insulin(&self, basal_u_per_min: f64) -> f64 {
        basal_u_per_min * 1000.0
            / (self.distribution_volume_insulin * self.weight_kg * self.insulin_clearance)
    }

    /// Endogenous glucose production (mg/dL/min) balancing fasting glucose at
    /// the basal-equilibrium infusion.
    pub fn endogenous_production(&self) -> f64 {
        let x_b = self.insulin_sensitivity * self.steady_plasma_insulin(self.basal_equilibrium_u_per_min);
        (self.glucose_effectiveness + x_b) * self.fasting_glucose_mgdl
    }

    /// Steady-state glucose under a constant basal infusion, if one exists.
    pub fn steady_glucose(&self, basal_u_per_min: f64) -> f64 {
        let x = self.insulin_sensitivity * self.steady_plasma_insulin(basal_u_per_min);
        self.endogenous_production() / (self.glucose_effectiveness + x)
    }

    /// Pump cap: five times the equilibrium basal.
    pub fn max_basal(&self) -> f64 {
        5.0 * self.basal_equilibrium_u_per_min
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PidGains {
    pub k_p: f64,
    pub k_i: f64,
    pub k_d: f64,
    pub g_targ_mgdl: f64,
    pub integral_clamp: f64,
}

/// Everything the cohort file stores for one patient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientProfile {
    #[serde(flatten)]
    pub params: PatientParams,
    pub pid: PidGains,
    pub meals: MealSchedule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cohort {
    pub version: u32,
    pub patients: Vec<PatientProfile>,
}

impl Cohort {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cohort: Cohort = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if cohort.version != COHORT_VERSION {
            return Err(Error::VersionMismatch {
                kind: "cohort",
                found: cohort.version,
                expected: COHORT_VERSION,
            });
        }
        for p in &cohort.patients {
            p.params.validate()?;
        }
        Ok(cohort)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// The cohort compiled into the crate.
    pub fn builtin() -> Self {
        Self::from_toml(DEFAULT_COHORT_TOML).expect("built-in cohort file is valid")
    }

    pub fn get(&self, id: PatientId) -> Result<&PatientProfile> {
        self.patients
            .iter()
            .find(|p| p.params.id == id)
            .ok_or_else(|| Error::UnknownPatient(id.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("cohort serialises")
    }
}
