use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use tailwalk_core::potential::{certify_super, drift_hat};
use tailwalk_core::sim::{lindley_tail, sample_cycles};
use tailwalk_core::{GridSpec, IncrementModel};

fn drift_operator(c: &mut Criterion) {
    let m = IncrementModel::canonical_pareto();
    c.bench_function("drift_hat/pareto", |b| {
        b.iter(|| drift_hat(black_box(0.5), black_box(12.0), &m).unwrap())
    });
    let w = IncrementModel::weibull_shift(0.5, 1.0, 3.0).unwrap();
    c.bench_function("drift_hat/weibull", |b| {
        b.iter(|| drift_hat(black_box(0.5), black_box(12.0), &w).unwrap())
    });
}

fn certification(c: &mut Criterion) {
    let m = IncrementModel::canonical_pareto();
    let grid = GridSpec { points: 128, ..GridSpec::default() };
    let mut g = c.benchmark_group("certify");
    g.sample_size(10);
    g.bench_function("super_eps0.5_128pts", |b| {
        b.iter(|| certify_super(&m, black_box(0.5), &grid).unwrap())
    });
    g.finish();
}

fn simulation(c: &mut Criterion) {
    let m = IncrementModel::canonical_pareto();
    let xs: Vec<f64> = (0..=40).map(|i| i as f64 * 0.5).collect();
    let mut g = c.benchmark_group("simulate");
    g.sample_size(10);
    g.bench_function("cycles_1e5", |b| {
        b.iter(|| sample_cycles(&m, black_box(100_000), 10_000_000, 1))
    });
    g.bench_function("lindley_4x1e5", |b| {
        b.iter(|| lindley_tail(&m, &xs, black_box(100_000), 1_000, 4, 1).unwrap())
    });
    g.finish();
}

criterion_group!(kernels, drift_operator, certification, simulation);
criterion_main!(kernels);
