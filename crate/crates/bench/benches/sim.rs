use criterion::{criterion_group, criterion_main, Criterion};
use paint_bench::adult;
use paint_core::control::{PidConfig, PidController};
use paint_core::sim::{run_episode, step, EpisodeConfig, SimState};
use paint_core::STEP_MIN;
use std::hint::black_box;

fn sim(c: &mut Criterion) {
    let p = adult();
    let s0 = SimState::equilibrium(&p.params, 150.0);
    c.bench_function("sim/step", |b| {
        b.iter(|| step(black_box(&s0), &p.params, 0.02, 0.0, 0.0, STEP_MIN).unwrap())
    });
    let cfg = EpisodeConfig::new(1, p.meals.clone());
    c.bench_function("sim/pid_day", |b| {
        b.iter(|| {
            let mut ctrl = PidController::new(PidConfig::noise_free(&p.params, p.pid));
            run_episode(&p.params, &mut ctrl, &cfg, black_box(3), 0).unwrap()
        })
    });
}

criterion_group!(benches, sim);
criterion_main!(benches);
