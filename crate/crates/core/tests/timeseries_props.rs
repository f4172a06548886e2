use heliocast_core::timeseries::{
    build_supervised, quality_control_with, synthesize_dataset, ChronoPartition, IrradianceSeries, QcConfig,
    QcFlags, SiteMeta, SplitSpec,
};
use proptest::prelude::*;

fn meta() -> SiteMeta {
    SiteMeta::new("p", 40.0, 0.0, 0.0, 0).unwrap()
}

fn series(values: Vec<f64>, missing: Vec<bool>) -> IrradianceSeries {
    let n = values.len();
    let flags = missing
        .iter()
        .zip(&values)
        .map(|(&m, &v)| match (m, v < 0.0) {
            (true, _) => QcFlags::MISSING,
            (false, true) => QcFlags::NEGATIVE,
            (false, false) => QcFlags::empty(),
        })
        .collect();
    IrradianceSeries::new(meta(), 1800, (0..n as i64).map(|k| k * 1800).collect(), values, None, flags).unwrap()
}

#[test]
fn counting_series_embedding() {
    let s = series((0..24).map(f64::from).collect(), vec![false; 24]);
    let set = build_supervised(&s, 3, 2).unwrap();
    assert_eq!(set.len(), 24 - 3 - 2 + 1);
    assert_eq!(set.inputs.row(0).iter().copied().collect::<Vec<_>>(), vec![2.0, 1.0, 0.0]);
    assert_eq!(set.targets[0], 4.0);
    assert_eq!(*set.targets.last().unwrap(), 23.0);
}

#[test]
fn four_years_at_half_hour() {
    let s = synthesize_dataset(&meta(), 1461, 1).unwrap();
    assert_eq!(s.len(), 70_128);
    assert!(s.ghi.iter().all(|g| *g >= 0.0));
}

proptest! {
    #[test]
    fn embedding_rows_reproduce_the_series(
        values in prop::collection::vec(0.0f64..1000.0, 20..120),
        gaps in prop::collection::vec(any::<bool>(), 120),
        p in 1usize..6,
        h in 1usize..5,
    ) {
        let n = values.len();
        let missing: Vec<bool> = gaps[..n].iter().enumerate().map(|(i, g)| *g && i % 7 == 0).collect();
        let s = series(values.clone(), missing.clone());
        let Ok(set) = build_supervised(&s, p, h) else { return Ok(()); };
        for r in 0..set.len() {
            let a = set.anchor_indices[r];
            prop_assert_eq!(set.targets[r], values[a + h]);
            prop_assert_eq!(set.target_times[r], s.timestamps[a + h]);
            prop_assert!(!missing[a + h]);
            for j in 0..p {
                prop_assert_eq!(set.inputs[(r, j)], values[a - j]);
                prop_assert!(!missing[a - j]);
            }
        }
        let expected = (p - 1..n - h)
            .filter(|&a| (0..p).all(|j| !missing[a - j]) && !missing[a + h])
            .count();
        prop_assert_eq!(set.len(), expected);
    }

    #[test]
    fn looser_limits_never_flag_more(
        values in prop::collection::vec(-50.0f64..1500.0, 50),
        cs in prop::collection::vec(0.0f64..1000.0, 50),
        ratio in 1.0f64..2.0,
        extra in 0.0f64..1.0,
    ) {
        let s = series(values, vec![false; 50]);
        let strict = QcConfig { clearsky_ratio: ratio, ..QcConfig::default() };
        let loose = QcConfig { clearsky_ratio: ratio + extra, ..QcConfig::default() };
        let a = quality_control_with(&s, &cs, &strict).unwrap();
        let b = quality_control_with(&s, &cs, &loose).unwrap();
        for i in 0..50 {
            prop_assert!(a.qc_flags[i].contains(b.qc_flags[i]));
        }
    }

    #[test]
    fn partitions_are_chronological(train in 0.3f64..0.9, valid in 0.05f64..0.5, days in 5usize..20) {
        let s = synthesize_dataset(&meta(), days, 3).unwrap();
        let spec = SplitSpec { train_fraction: train, validation_fraction: valid, boundary: None };
        let part = ChronoPartition::new(s, &spec).unwrap();
        let (f, v, t) = (part.fit_range(), part.valid_range(), part.test_range());
        prop_assert_eq!(f.start, 0);
        prop_assert_eq!(f.end, v.start);
        prop_assert_eq!(v.end, t.start);
        prop_assert_eq!(t.end, part.series.len());
        let (fit, vs, test) = part.supervised(4, 2).unwrap();
        let last_fit = fit.target_times.last().copied().unwrap_or(i64::MIN);
        let first_valid = vs.target_times.first().copied().unwrap_or(i64::MAX);
        prop_assert!(last_fit < first_valid);
        if let (Some(lv), Some(ft)) = (vs.target_times.last(), test.target_times.first()) {
            prop_assert!(lv < ft);
        }
    }
}
