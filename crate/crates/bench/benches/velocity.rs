use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use kslab_bench::gaussian_grid;
use kslab_core::grid_solver::{fv_step, ConvolutionMethod, VelocityEngine};

fn velocity(c: &mut Criterion) {
    let mut group = c.benchmark_group("face_velocity");
    group.sample_size(10);
    for n in [32, 64, 128, 256] {
        let grid = gaussian_grid(n, 12.0, 0.01);
        for (name, method) in [
            ("fft_padded", ConvolutionMethod::FftPadded),
            ("direct_sum", ConvolutionMethod::DirectSum),
        ] {
            if method == ConvolutionMethod::DirectSum && n > 64 {
                continue;
            }
            let engine = VelocityEngine::new(6.0, n, 0.01, method).unwrap();
            group.bench_with_input(BenchmarkId::new(name, n), &grid, |b, g| {
                b.iter(|| engine.faces(black_box(g)).unwrap())
            });
        }
    }
    group.finish();

    let mut group = c.benchmark_group("fv_step");
    for n in [64, 256] {
        let grid = gaussian_grid(n, 12.0, 0.01);
        let u = VelocityEngine::new(6.0, n, 0.01, ConvolutionMethod::FftPadded)
            .unwrap()
            .faces(&grid)
            .unwrap();
        let h = grid.cell_size();
        let dt = 0.2 * (h * h / 4.0).min(h / (2.0 * u.max_speed()));
        group.bench_with_input(BenchmarkId::from_parameter(n), &grid, |b, g| {
            b.iter(|| fv_step(black_box(g), Some(&u), dt).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, velocity);
criterion_main!(benches);
