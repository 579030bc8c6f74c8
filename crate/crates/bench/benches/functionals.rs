use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use kslab_bench::{gaussian_cloud, gaussian_grid};
use kslab_core::diagnostics::g_eps_triple;
use kslab_core::measures::GridFunctionals;

fn functionals(c: &mut Criterion) {
    let mut group = c.benchmark_group("ensemble_row");
    group.sample_size(10);
    for n in [500, 2000, 8000] {
        let e = gaussian_cloud(n, 1.0, 12.0, 2);
        group.bench_with_input(BenchmarkId::from_parameter(n), &e, |b, e| {
            b.iter(|| black_box(e).diagnostic_row(0.0, 1.5, 0.01, 0.3).unwrap())
        });
    }
    group.finish();

    let mut group = c.benchmark_group("g_eps_triple_loop");
    group.sample_size(10);
    for n in [50, 100, 200] {
        let e = gaussian_cloud(n, 1.0, 12.0, 3);
        group.bench_with_input(BenchmarkId::from_parameter(n), &e, |b, e| {
            b.iter(|| g_eps_triple(black_box(e), 0.01).unwrap())
        });
    }
    group.finish();

    let mut group = c.benchmark_group("grid_row");
    group.sample_size(10);
    for n in [64, 128, 256] {
        let grid = gaussian_grid(n, 12.0, 0.01);
        let engine = GridFunctionals::new(6.0, n, 1.5, 0.01, 0.3).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &grid, |b, g| {
            b.iter(|| engine.row(black_box(g), 0.0).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, functionals);
criterion_main!(benches);
