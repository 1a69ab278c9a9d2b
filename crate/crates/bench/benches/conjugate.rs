use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use discount_core::sim::{self, SimConfig};
use discount_core::{conditional_prediction, pos_large, NormalPrior};

fn closed_forms(c: &mut Criterion) {
    let prior = NormalPrior::new(-1.0, 1.0).unwrap();
    c.bench_function("conditional_prediction", |b| {
        b.iter(|| conditional_prediction(black_box(&prior), 0.5, 0.3, black_box(-1.5)))
    });
    c.bench_function("pos_large", |b| {
        b.iter(|| pos_large(black_box(&prior), 0.5, 0.3, black_box(-1.5), -1.5))
    });
}

fn simulation(c: &mut Criterion) {
    let config = SimConfig {
        prior: NormalPrior::new(-1.0, 1.0).unwrap(),
        sigma_s: 0.5,
        sigma_l: 0.3,
        n_draws: 1_000_000,
        delta: Some(-1.5),
        seed: 42,
    };
    let mut group = c.benchmark_group("simulate");
    group.sample_size(10);
    group.bench_function("1e6 draws", |b| {
        b.iter(|| sim::simulate(black_box(&config)))
    });
    group.bench_function("oracle 1e6 draws", |b| {
        b.iter(|| sim::mc_conditional_oracle(black_box(&config), -1.0, 0.01))
    });
    group.finish();
}

criterion_group!(benches, closed_forms, simulation);
criterion_main!(benches);
