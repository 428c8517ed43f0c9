//! Criterion benchmarks for the simulator, the network engine and the
//! TD3+BC update live in `benches/`. Shared fixtures are here.

use paint_core::harness::{generate_dataset, Prepared};
use paint_core::orl::{safety_rewards, Td3bcConfig, TrainingData};
use paint_core::sim::{Cohort, FaultInjector, PatientId, PatientProfile};

pub fn adult() -> PatientProfile {
    Cohort::builtin().get(PatientId::Adult).expect("builtin adult").clone()
}

/// One day of demonstrator data as TD3+BC transitions.
pub fn training_data(cfg: &Td3bcConfig) -> TrainingData {
    let p = adult();
    let ds = generate_dataset(&p, 1, 1, 0, FaultInjector::none()).expect("simulation");
    let prep = Prepared::new(ds, &p).expect("features");
    let rewards = safety_rewards(&prep.dataset, cfg);
    TrainingData::build(&prep.dataset, &prep.table, &prep.normalizer, &rewards, p.params.max_basal(), cfg)
}
