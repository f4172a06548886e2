use heliocast_core::probabilistic::{
    build_lookup_table, crps_quantile, levels, predict_quantiles_qr, quantiles_from_lookup, repair_quantiles,
    QrFit, QuantileModel, N_LEVELS,
};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn nondecreasing(q: &[f64]) -> bool {
    q.windows(2).all(|w| w[0] <= w[1])
}

proptest! {
    #[test]
    fn qr_output_never_crosses(
        weights in prop::collection::vec(-2.0f64..2.0, N_LEVELS * 3),
        rows in prop::collection::vec(0.0f64..900.0, 2 * 10),
    ) {
        let fits = levels()
            .into_iter()
            .enumerate()
            .map(|(i, tau)| QrFit {
                tau,
                intercept: 300.0 * weights[3 * i],
                coefficients: vec![weights[3 * i + 1], weights[3 * i + 2]],
                objective: 0.0,
                iterations: 0,
            })
            .collect();
        let model = QuantileModel { n_lags: 2, fits };
        let x = DMatrix::from_row_slice(10, 2, &rows);
        let qf = predict_quantiles_qr(&model, &x, &(0..10).collect::<Vec<_>>()).unwrap();
        for q in &qf.quantiles {
            prop_assert_eq!(q.len(), N_LEVELS);
            prop_assert!(nondecreasing(q));
            prop_assert!(q[0] >= 0.0);
        }
        qf.validate().unwrap();
    }

    #[test]
    fn repair_is_idempotent(q in prop::collection::vec(-100.0f64..100.0, N_LEVELS)) {
        let once = repair_quantiles(q);
        prop_assert_eq!(repair_quantiles(once.clone()), once);
    }

    #[test]
    fn lookup_scaling_is_monotone(residuals in prop::collection::vec(-300.0f64..300.0, 100..400)) {
        let table = build_lookup_table(&residuals).unwrap();
        prop_assert_eq!(table.k[0], 0.0);
        prop_assert!(nondecreasing(&table.k));
        let mut prev = 0.0;
        for c in 0..=200 {
            let k = table.k_at(c as f64 / 200.0);
            prop_assert!(k >= prev - 1e-15);
            prev = k;
        }
        let qf = quantiles_from_lookup(&[0.0, 50.0, 400.0], &[0, 1, 2], &table).unwrap();
        for q in &qf.quantiles {
            prop_assert!(nondecreasing(q));
            prop_assert!(q[0] >= 0.0);
        }
    }

    #[test]
    fn point_mass_crps_is_scaled_absolute_error(c in 0.0f64..1000.0, y in 0.0f64..1000.0) {
        let q = vec![c; N_LEVELS];
        prop_assert!((crps_quantile(&q, y) - 1.01 * (y - c).abs()).abs() <= 1e-9 * (1.0 + (y - c).abs()));
    }

    #[test]
    fn crps_is_translation_invariant_and_nonnegative(
        raw in prop::collection::vec(0.0f64..500.0, N_LEVELS),
        y in 0.0f64..500.0,
        d in 0.0f64..500.0,
    ) {
        let q = repair_quantiles(raw);
        let shifted: Vec<f64> = q.iter().map(|v| v + d).collect();
        let a = crps_quantile(&q, y);
        prop_assert!(a >= 0.0);
        prop_assert!((a - crps_quantile(&shifted, y + d)).abs() <= 1e-9 * (1.0 + a));
    }

    #[test]
    fn sharper_correct_forecasts_score_better(y in 10.0f64..900.0, spread in 1.0f64..100.0) {
        let wide: Vec<f64> = levels().iter().map(|a| y + 2.0 * spread * (a - 0.5)).collect();
        let narrow: Vec<f64> = levels().iter().map(|a| y + spread * (a - 0.5)).collect();
        prop_assert!(crps_quantile(&narrow, y) < crps_quantile(&wide, y));
    }
}
