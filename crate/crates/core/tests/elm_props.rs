use heliocast_core::elm::{self, fit_ridge, fit_ridge_with_bias, train_run, ElmConfig, ElmModel};
use heliocast_core::timeseries::SupervisedSet;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_system(seed: u64, rows: usize, cols: usize) -> (DMatrix<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0));
    let y = (0..rows).map(|_| rng.random_range(-5.0..5.0)).collect();
    (h, y)
}

fn supervised(x: DMatrix<f64>, y: Vec<f64>) -> SupervisedSet {
    let n = y.len();
    SupervisedSet {
        n_lags: x.ncols(),
        inputs: x,
        targets: y,
        target_times: (0..n as i64).collect(),
        anchor_indices: (0..n).collect(),
        horizon_steps: 1,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ridge_norm_shrinks_with_lambda(seed in any::<u64>(), rows in 5usize..40, cols in 1usize..8, l1 in 0.0f64..5.0, dl in 0.01f64..5.0) {
        let (h, y) = random_system(seed, rows, cols);
        let small = fit_ridge(&h, &y, l1 + 0.01).unwrap();
        let large = fit_ridge(&h, &y, l1 + 0.01 + dl).unwrap();
        prop_assert!(large.norm() <= small.norm() * (1.0 + 1e-12));
    }

    #[test]
    fn ridge_is_linear_in_the_target(seed in any::<u64>(), rows in 5usize..40, cols in 1usize..8, c in -10.0f64..10.0, lambda in 0.01f64..10.0) {
        let (h, y) = random_system(seed, rows, cols);
        let base = fit_ridge(&h, &y, lambda).unwrap();
        let scaled: Vec<f64> = y.iter().map(|v| c * v).collect();
        let beta = fit_ridge(&h, &scaled, lambda).unwrap();
        for (a, b) in beta.iter().zip(base.iter()) {
            prop_assert!((a - c * b).abs() <= 1e-9 * (1.0 + (c * b).abs()));
        }
    }

    #[test]
    fn bias_absorbs_target_shifts(seed in any::<u64>(), rows in 10usize..40, cols in 1usize..6, shift in -100.0f64..100.0) {
        let (h, y) = random_system(seed, rows, cols);
        let (b0, c0) = fit_ridge_with_bias(&h, &y, 0.2).unwrap();
        let shifted: Vec<f64> = y.iter().map(|v| v + shift).collect();
        let (b1, c1) = fit_ridge_with_bias(&h, &shifted, 0.2).unwrap();
        prop_assert!((&b1 - &b0).norm() <= 1e-8 * (1.0 + b0.norm()) * (1.0 + shift.abs()));
        prop_assert!((c1 - c0 - shift).abs() <= 1e-8 * (1.0 + shift.abs()));
    }
}

#[test]
fn serialization_round_trip_is_lossless() {
    let (x, _) = random_system(4, 60, 5);
    let y: Vec<f64> = (0..60).map(|i| 100.0 + (i as f64).sin() * 50.0).collect();
    let cfg = ElmConfig { n_input: 5, n_hidden: 17, n_runs: 1, seed: 11, ..Default::default() };
    let model = train_run(&supervised(x.clone(), y), &cfg, 3).unwrap();
    let text = serde_json::to_string(&model).unwrap();
    let back: ElmModel = serde_json::from_str(&text).unwrap();
    assert_eq!(back, model);
    let p0 = elm::predict(&model, &x).unwrap();
    let p1 = elm::predict(&back, &x).unwrap();
    assert!(p0.iter().zip(&p1).all(|(a, b)| a.to_bits() == b.to_bits()));
}

#[test]
fn wide_network_memorizes_small_training_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 25;
    let x = DMatrix::from_fn(n, 3, |_, _| rng.random_range(0.0..500.0));
    let y: Vec<f64> = (0..n).map(|_| rng.random_range(50.0..800.0)).collect();
    let cfg = ElmConfig { n_input: 3, n_hidden: 200, ridge_lambda: 0.0, n_runs: 1, ..Default::default() };
    let model = train_run(&supervised(x.clone(), y.clone()), &cfg, 0).unwrap();
    let fitted = elm::predict(&model, &x).unwrap();
    let worst = fitted.iter().zip(&y).map(|(f, t)| (f - t).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-2, "largest training error {worst}");
}

#[test]
fn runs_are_reproducible_and_distinct() {
    let (x, _) = random_system(5, 80, 4);
    let y: Vec<f64> = (0..80).map(|i| (i % 9) as f64 * 10.0).collect();
    let set = supervised(x, y);
    let cfg = ElmConfig { n_input: 4, n_hidden: 12, n_runs: 1, seed: 2, ..Default::default() };
    let a = train_run(&set, &cfg, 1).unwrap();
    let b = train_run(&set, &cfg, 1).unwrap();
    let c = train_run(&set, &cfg, 2).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.weights, c.weights);
}
