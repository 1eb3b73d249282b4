use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mra_core::experiments::SweepSpec;
use mra_core::rootfind::{bisection_solve, modified_newton_solve, newton_solve, reference_root};
use mra_core::solver::waterfill;
use mra_core::{solve, InnerMethod, Mode, RootProblem, SolverConfig};

fn bench_roots(c: &mut Criterion) {
    let rp = RootProblem { beta: 1.0, c: 2e9, power: 0.01, lambda: 0.4 };
    let b0 = 10.0 * reference_root(&rp).unwrap();
    let cfg = SolverConfig::default();
    let mut group = c.benchmark_group("root");
    group.bench_function("newton", |b| b.iter(|| newton_solve(black_box(&rp), b0, &cfg).unwrap()));
    group.bench_function("modified_newton", |b| b.iter(|| modified_newton_solve(black_box(&rp), b0, &cfg).unwrap()));
    group.bench_function("bisection", |b| b.iter(|| bisection_solve(black_box(&rp), b0, &cfg).unwrap()));
    group.finish();
}

fn bench_waterfill(c: &mut Criterion) {
    let b_row: Vec<f64> = (1..=8).map(|q| q as f64 * 1e6).collect();
    let c_row: Vec<f64> = (1..=8).map(|q| 1e8 / q as f64).collect();
    c.bench_function("waterfill/8", |b| b.iter(|| waterfill(black_box(&b_row), &c_row, 0.02, 1e-3)));
}

fn bench_solve(c: &mut Criterion) {
    let spec = SweepSpec::default();
    let mut group = c.benchmark_group("solve");
    group.sample_size(20);
    for l in [5, 20, 50] {
        let s = spec.scenario(l, 1).unwrap();
        for method in [InnerMethod::Newton, InnerMethod::ModifiedNewton] {
            let cfg = SolverConfig::default().with_method(method);
            for mode in [Mode::Parallel, Mode::Switched] {
                let id = BenchmarkId::new(format!("{mode}/{method}"), l);
                group.bench_with_input(id, &s, |b, s| b.iter(|| solve(s, &cfg, mode).unwrap()));
            }
        }
    }
    group.finish();
}

criterion_group!(benches, bench_roots, bench_waterfill, bench_solve);
criterion_main!(benches);
