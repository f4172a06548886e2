use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use heliocast_core::elm::{fit_ridge, train_run, ElmConfig};
use heliocast_core::metrics::mann_whitney_u;
use heliocast_core::probabilistic::{quantile_regression, QrOptions};
use heliocast_core::timeseries::{synthesize_dataset, ChronoPartition, SiteMeta, SplitSpec};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn ridge(c: &mut Criterion) {
    let mut group = c.benchmark_group("fit_ridge");
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (rows, cols) in [(2000, 50), (8000, 200), (8000, 472)] {
        let h = DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0));
        let y: Vec<f64> = (0..rows).map(|_| rng.random_range(0.0..1000.0)).collect();
        group.bench_with_input(BenchmarkId::from_parameter(format!("{rows}x{cols}")), &(h, y), |b, (h, y)| {
            b.iter(|| fit_ridge(black_box(h), black_box(y), 0.2).unwrap())
        });
    }
    group.finish();
}

fn elm_training(c: &mut Criterion) {
    let meta = SiteMeta::new("bench", 37.4, -5.9, 30.0, 60).unwrap();
    let series = synthesize_dataset(&meta, 365, 3).unwrap();
    let part = ChronoPartition::new(series, &SplitSpec::default()).unwrap();
    let mut group = c.benchmark_group("elm_train_run");
    group.sample_size(10);
    for (n_input, n_hidden) in [(6, 24), (24, 96), (48, 192)] {
        let (fit, _, _) = part.supervised(n_input, 6).unwrap();
        let cfg = ElmConfig { n_input, n_hidden, n_runs: 1, ..Default::default() };
        group.bench_with_input(BenchmarkId::from_parameter(format!("{n_input}-{n_hidden}")), &fit, |b, fit| {
            b.iter(|| train_run(black_box(fit), &cfg, 0).unwrap())
        });
    }
    group.finish();
}

fn qr_fit(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut group = c.benchmark_group("quantile_regression");
    group.sample_size(20);
    for (rows, cols) in [(500, 3), (2000, 6), (8000, 6)] {
        let x = DMatrix::from_fn(rows, cols, |_, _| rng.random_range(0.0..800.0));
        let y: Vec<f64> = (0..rows)
            .map(|r| 0.8 * x[(r, 0)] + 0.1 * x[(r, cols - 1)] + rng.random_range(-60.0..60.0))
            .collect();
        group.bench_with_input(BenchmarkId::from_parameter(format!("{rows}x{cols}")), &(x, y), |b, (x, y)| {
            b.iter(|| quantile_regression(black_box(x), black_box(y), 0.9, &QrOptions::default()).unwrap())
        });
    }
    group.finish();
}

fn mann_whitney(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut group = c.benchmark_group("mann_whitney_u");
    for n in [6, 50, 5000] {
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.1)).collect();
        group.bench_with_input(BenchmarkId::from_parameter(n), &(a, b), |bench, (a, b)| {
            bench.iter(|| mann_whitney_u(black_box(a), black_box(b)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, ridge, elm_training, qr_fit, mann_whitney);
criterion_main!(benches);
