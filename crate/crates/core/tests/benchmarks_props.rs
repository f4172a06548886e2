use heliocast_core::benchmarks::{
    comb, exp_smoothing, fit_ar_ls, pacf, select_p_pacf, smart_persistence, ArVariant, BenchmarkInputs, Cliper,
};
use heliocast_core::timeseries::{synthesize_dataset, SiteMeta, SupervisedSet};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn site() -> SiteMeta {
    SiteMeta::new("b", 37.0, -4.0, 100.0, 60).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn unit_correlation_cliper_and_unit_smoothing_reduce_to_smart_persistence(
        seed in any::<u64>(), h in 1usize..8, k_bar in 0.0f64..1.5,
    ) {
        let series = synthesize_dataset(&site(), 6, seed).unwrap();
        let inputs = BenchmarkInputs::new(&series, h, 10.0).unwrap();
        let sp = smart_persistence(&inputs);
        let cliper = Cliper { rho: 1.0, k_bar }.forecast(&inputs);
        let es = exp_smoothing(&inputs, 1.0).unwrap();
        prop_assert_eq!(&cliper.target_times, &sp.target_times);
        for i in 0..sp.len() {
            prop_assert!((cliper.predictions[i] - sp.predictions[i]).abs() <= 1e-12);
            prop_assert!((es.predictions[i] - sp.predictions[i]).abs() <= 1e-12);
        }
        let c = comb(&[sp.clone(), cliper, es]).unwrap();
        for i in 0..sp.len() {
            prop_assert!((c.predictions[i] - sp.predictions[i]).abs() <= 1e-9);
        }
    }

    #[test]
    fn least_squares_fit_cannot_be_improved(seed in any::<u64>(), p in 1usize..5, which in 0usize..6, eps in -0.1f64..0.1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 200;
        let x = DMatrix::from_fn(n, p, |_, _| rng.random_range(0.0..1.0));
        let y: Vec<f64> = (0..n).map(|r| x.row(r).sum() * 0.7 + rng.random_range(-0.2..0.2)).collect();
        let set = SupervisedSet {
            inputs: x.clone(),
            targets: y.clone(),
            target_times: (0..n as i64).collect(),
            anchor_indices: (0..n).collect(),
            horizon_steps: 1,
            n_lags: p,
        };
        let model = fit_ar_ls(&set, ArVariant::Raw).unwrap();
        let sse = |c0: f64, coef: &[f64]| -> f64 {
            (0..n).map(|r| {
                let f = c0 + (0..p).map(|j| coef[j] * x[(r, j)]).sum::<f64>();
                (y[r] - f).powi(2)
            }).sum()
        };
        let best = sse(model.intercept, &model.coefficients);
        let mut coef = model.coefficients.clone();
        let mut c0 = model.intercept;
        if which % (p + 1) == p { c0 += eps } else { coef[which % (p + 1)] += eps }
        prop_assert!(sse(c0, &coef) >= best - 1e-9 * (1.0 + best));
    }
}

#[test]
fn pacf_of_first_order_process() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut v = vec![0.0f64; 5000];
    for t in 1..v.len() {
        v[t] = 0.7 * v[t - 1] + noise.sample(&mut rng);
    }
    let valid = vec![true; v.len()];
    let r = pacf(&v, &valid, 10).unwrap();
    assert!((r[0] - 0.7).abs() < 0.03, "lag-1 partial autocorrelation {}", r[0]);
    assert!(r[1..].iter().all(|x| x.abs() < 0.06));
    assert!(pacf(&v[..20], &valid[..20], 10).is_err());
    assert!(select_p_pacf(&v, &valid, 10).unwrap() >= 1);
}
