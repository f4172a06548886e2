//! Reference predictors: naive baselines, CSI-scale climatology blends and
//! least-squares autoregressions.
//!
//! CSI-scale models forecast `k̂ · GHIcs(a + h)` from anchor `a` and fall back
//! to the clearsky forecast whenever the anchor CSI is invalid.

use std::ops::Range;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::clearsky::{csi, CsiSeries, DEFAULT_CSI_CAP};
use crate::error::{Error, Result};
use crate::linalg::{centered_least_squares, solve_spd};
use crate::metrics;
use crate::timeseries::{build_supervised, build_supervised_values, IrradianceSeries, SupervisedSet};

pub const AR_JITTER: f64 = 1e-8;
pub const DEFAULT_P_MAX: usize = 96;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointForecastSet {
    pub model_id: String,
    pub horizon_steps: usize,
    pub target_times: Vec<i64>,
    pub predictions: Vec<f64>,
}

impl PointForecastSet {
    pub fn len(&self) -> usize {
        self.predictions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predictions.is_empty()
    }
}

/// Series, clearsky and clearsky index shared by the benchmark predictors.
#[derive(Debug, Clone)]
pub struct BenchmarkInputs<'a> {
    pub series: &'a IrradianceSeries,
    pub clearsky: Vec<f64>,
    pub csi: CsiSeries,
    pub horizon_steps: usize,
}

impl<'a> BenchmarkInputs<'a> {
    pub fn new(series: &'a IrradianceSeries, horizon_steps: usize, night_threshold: f64) -> Result<Self> {
        if horizon_steps == 0 {
            return Err(Error::InvalidConfig("horizon must be >= 1".into()));
        }
        if series.len() <= horizon_steps {
            return Err(Error::SeriesTooShort { required: horizon_steps + 1, available: series.len() });
        }
        let clearsky = series.clearsky_ghi.clone().ok_or(Error::MissingClearsky)?;
        let mut k = csi(&series.ghi, &clearsky, night_threshold)?;
        for i in 0..series.len() {
            if !series.is_valid(i) {
                k.validity[i] = false;
                k.values[i] = 0.0;
            }
        }
        Ok(Self { series, clearsky, csi: k, horizon_steps })
    }

    fn anchors(&self) -> Range<usize> {
        0..self.series.len() - self.horizon_steps
    }

    fn build(&self, model_id: &str, f: impl Fn(usize) -> f64) -> PointForecastSet {
        let h = self.horizon_steps;
        let anchors = self.anchors();
        PointForecastSet {
            model_id: model_id.to_string(),
            horizon_steps: h,
            target_times: anchors.clone().map(|a| self.series.timestamps[a + h]).collect(),
            predictions: anchors.map(|a| f(a).max(0.0)).collect(),
        }
    }

    /// `k̂ · GHIcs(a+h)`, or the clearsky forecast when the anchor CSI is invalid.
    fn csi_forecast(&self, model_id: &str, k_hat: impl Fn(usize) -> f64) -> PointForecastSet {
        let h = self.horizon_steps;
        self.build(model_id, |a| {
            let cs = self.clearsky[a + h];
            if self.csi.validity[a] { k_hat(a) * cs } else { cs }
        })
    }

    /// Anchors whose anchor and target both lie in `range` with valid CSI.
    fn valid_pairs(&self, range: &Range<usize>) -> impl Iterator<Item = usize> + '_ {
        let h = self.horizon_steps;
        let end = range.end.min(self.series.len()).saturating_sub(h);
        (range.start..end).filter(move |&a| self.csi.validity[a] && self.csi.validity[a + h])
    }

    /// In-sample nRMSE of `pred` over valid daytime targets in `range`.
    fn range_nrmse(&self, pred: &PointForecastSet, range: &Range<usize>) -> f64 {
        let h = self.horizon_steps;
        let end = range.end.min(self.series.len()).saturating_sub(h);
        let (mut y, mut f) = (Vec::new(), Vec::new());
        for a in range.start..end {
            if self.series.is_valid(a + h) && self.csi.validity[a + h] {
                y.push(self.series.ghi[a + h]);
                f.push(pred.predictions[a]);
            }
        }
        metrics::nrmse(&y, &f, None).unwrap_or(f64::INFINITY)
    }
}

/// Most recent valid observation at or before `a`; 0 when there is none.
fn last_valid(series: &IrradianceSeries, a: usize) -> f64 {
    (0..=a).rev().find(|&i| series.is_valid(i)).map_or(0.0, |i| series.ghi[i])
}

pub fn persistence(inputs: &BenchmarkInputs<'_>) -> PointForecastSet {
    inputs.build("P", |a| last_valid(inputs.series, a))
}

pub fn clearsky_naive(inputs: &BenchmarkInputs<'_>) -> PointForecastSet {
    let h = inputs.horizon_steps;
    inputs.build("CS", |a| inputs.clearsky[a + h])
}

pub fn smart_persistence(inputs: &BenchmarkInputs<'_>) -> PointForecastSet {
    inputs.csi_forecast("SP", |a| inputs.csi.values[a])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cliper {
    /// Lag-h autocorrelation of training CSI.
    pub rho: f64,
    /// Training mean CSI.
    pub k_bar: f64,
}

impl Cliper {
    pub fn fit(inputs: &BenchmarkInputs<'_>, fit: Range<usize>) -> Result<Self> {
        let valid: Vec<f64> = fit
            .clone()
            .filter(|&i| inputs.csi.validity[i])
            .map(|i| inputs.csi.values[i])
            .collect();
        if valid.is_empty() {
            return Err(Error::NoValidTraining("no valid clearsky index in the fit period".into()));
        }
        let k_bar = valid.iter().sum::<f64>() / valid.len() as f64;
        let var = valid.iter().map(|k| (k - k_bar).powi(2)).sum::<f64>() / valid.len() as f64;
        let h = inputs.horizon_steps;
        let (mut cov, mut n) = (0.0, 0usize);
        for a in inputs.valid_pairs(&fit) {
            cov += (inputs.csi.values[a] - k_bar) * (inputs.csi.values[a + h] - k_bar);
            n += 1;
        }
        let rho = if var > 0.0 && n > 0 { (cov / n as f64 / var).clamp(-1.0, 1.0) } else { 1.0 };
        Ok(Self { rho, k_bar })
    }

    pub fn forecast(&self, inputs: &BenchmarkInputs<'_>) -> PointForecastSet {
        inputs.csi_forecast("CLIPER", |a| self.rho * inputs.csi.values[a] + (1.0 - self.rho) * self.k_bar)
    }
}

/// Smoothed CSI state at every index; the state only moves on valid CSI.
pub fn smoothed_csi(k: &CsiSeries, alpha: f64) -> Vec<f64> {
    let mut state: Option<f64> = None;
    k.values
        .iter()
        .zip(&k.validity)
        .map(|(&v, &ok)| {
            if ok {
                state = Some(match state {
                    None => v,
                    Some(s) => alpha * v + (1.0 - alpha) * s,
                });
            }
            state.unwrap_or(0.0)
        })
        .collect()
}

pub fn exp_smoothing(inputs: &BenchmarkInputs<'_>, alpha: f64) -> Result<PointForecastSet> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidConfig(format!("smoothing factor {alpha} outside (0, 1]")));
    }
    let s = smoothed_csi(&inputs.csi, alpha);
    Ok(inputs.csi_forecast("ES", |a| s[a]))
}

/// Grid `0.05, 0.10, ..., 1.00`.
pub fn es_alpha_grid() -> Vec<f64> {
    (1..=20).map(|i| i as f64 * 0.05).collect()
}

/// Smoothing factor minimizing in-sample nRMSE over `fit`; smaller wins ties.
pub fn select_es_alpha(inputs: &BenchmarkInputs<'_>, fit: Range<usize>) -> Result<f64> {
    let mut best = (f64::INFINITY, 1.0);
    for alpha in es_alpha_grid() {
        let score = inputs.range_nrmse(&exp_smoothing(inputs, alpha)?, &fit);
        if score < best.0 {
            best = (score, alpha);
        }
    }
    Ok(best.1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Artu {
    /// `(c, φ₁, φ₂)`, or `None` when the fit was singular.
    pub coefficients: Option<[f64; 3]>,
}

impl Artu {
    pub fn fit(inputs: &BenchmarkInputs<'_>, fit: Range<usize>) -> Result<Self> {
        let h = inputs.horizon_steps;
        let rows: Vec<usize> = inputs
            .valid_pairs(&fit)
            .filter(|&a| a >= 1 && inputs.csi.validity[a - 1])
            .collect();
        if rows.len() < 3 {
            return Err(Error::NoValidTraining("fewer than 3 valid clearsky-index lag pairs".into()));
        }
        let k = &inputs.csi.values;
        let x = DMatrix::from_fn(rows.len(), 2, |r, j| k[rows[r] - j]);
        let y: Vec<f64> = rows.iter().map(|&a| k[a + h]).collect();
        let coefficients = match centered_least_squares(&x, &y, AR_JITTER) {
            Ok((c, phi)) => Some([c, phi[0], phi[1]]),
            Err(Error::Singular(_)) | Err(Error::NonFinite(_)) => None,
            Err(e) => return Err(e),
        };
        Ok(Self { coefficients })
    }

    pub fn is_fallback(&self) -> bool {
        self.coefficients.is_none()
    }

    pub fn forecast(&self, inputs: &BenchmarkInputs<'_>) -> PointForecastSet {
        let Some([c, p1, p2]) = self.coefficients else {
            let mut sp = smart_persistence(inputs);
            sp.model_id = "ARTU".into();
            return sp;
        };
        let k = &inputs.csi;
        inputs.csi_forecast("ARTU", |a| {
            let k0 = k.values[a];
            let k1 = if a >= 1 && k.validity[a - 1] { k.values[a - 1] } else { k0 };
            (c + p1 * k0 + p2 * k1).clamp(0.0, DEFAULT_CSI_CAP)
        })
    }
}

/// Pointwise unweighted mean of aligned member forecasts.
pub fn comb(members: &[PointForecastSet]) -> Result<PointForecastSet> {
    if members.len() < 2 {
        return Err(Error::MisalignedForecasts("need at least two members".into()));
    }
    let first = &members[0];
    for m in &members[1..] {
        if m.horizon_steps != first.horizon_steps || m.target_times != first.target_times {
            return Err(Error::MisalignedForecasts(format!("{} does not align with {}", m.model_id, first.model_id)));
        }
    }
    let n = members.len() as f64;
    let predictions = (0..first.len())
        .map(|i| members.iter().map(|m| m.predictions[i]).sum::<f64>() / n)
        .collect();
    Ok(PointForecastSet {
        model_id: "COMB".into(),
        horizon_steps: first.horizon_steps,
        target_times: first.target_times.clone(),
        predictions,
    })
}

// ---------------------------------------------------------------------------
// Autoregression
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArVariant {
    Raw,
    ClearskyIndex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArModel {
    /// `φ₁..φ_p`, most recent lag first.
    pub coefficients: Vec<f64>,
    pub order: usize,
    pub intercept: f64,
    pub variant: ArVariant,
    pub horizon_steps: usize,
}

impl ArModel {
    pub fn predict_row(&self, lags: impl Iterator<Item = f64>) -> f64 {
        self.intercept + lags.zip(&self.coefficients).map(|(x, c)| x * c).sum::<f64>()
    }
}

/// Direct h-step least squares on a lag embedding.
pub fn fit_ar_ls(train: &SupervisedSet, variant: ArVariant) -> Result<ArModel> {
    let p = train.n_lags;
    if train.len() < p + 1 {
        return Err(Error::InsufficientData(format!("{} rows for order {p}", train.len())));
    }
    let (intercept, phi) = centered_least_squares(&train.inputs, &train.targets, AR_JITTER)?;
    if phi.iter().any(|v| !v.is_finite()) || !intercept.is_finite() {
        return Err(Error::Singular("autoregression coefficients are not finite".into()));
    }
    Ok(ArModel {
        coefficients: phi.iter().copied().collect(),
        order: p,
        intercept,
        variant,
        horizon_steps: train.horizon_steps,
    })
}

/// Training rows on the CSI scale: all lags and the target valid.
pub fn csi_supervised(inputs: &BenchmarkInputs<'_>, n_lags: usize) -> Result<SupervisedSet> {
    build_supervised_values(
        &inputs.csi.values,
        &inputs.series.timestamps,
        n_lags,
        inputs.horizon_steps,
        |i| inputs.csi.validity[i],
    )
}

/// Raw AR forecasts on every embeddable anchor, rAR forecasts on every anchor.
pub fn forecast_ar(model: &ArModel, inputs: &BenchmarkInputs<'_>) -> Result<PointForecastSet> {
    if model.horizon_steps != inputs.horizon_steps {
        return Err(Error::DimensionMismatch { expected: model.horizon_steps, actual: inputs.horizon_steps });
    }
    match model.variant {
        ArVariant::Raw => {
            let set = build_supervised(inputs.series, model.order, model.horizon_steps)?;
            let predictions = (0..set.len())
                .map(|r| model.predict_row(set.inputs.row(r).iter().copied()).max(0.0))
                .collect();
            Ok(PointForecastSet {
                model_id: "AR".into(),
                horizon_steps: model.horizon_steps,
                target_times: set.target_times,
                predictions,
            })
        }
        ArVariant::ClearskyIndex => {
            let k = &inputs.csi;
            let p = model.order;
            Ok(inputs.csi_forecast("rAR", |a| {
                // Invalid older lags carry the nearest more recent valid value.
                let mut carry = k.values[a];
                let lags = (0..p).map(|j| {
                    if j <= a && k.validity[a - j] {
                        carry = k.values[a - j];
                    }
                    carry
                });
                model.predict_row(lags)
            }))
        }
    }
}

/// Order in `1..=p_max` minimizing validation nRMSE; smaller `p` wins ties.
///
/// Both sets must embed `p_max` lags; order `p` uses the leading `p` columns.
pub fn select_p_bruteforce(fit: &SupervisedSet, valid: &SupervisedSet, p_max: usize) -> Result<usize> {
    if p_max == 0 || fit.n_lags < p_max || valid.n_lags < p_max {
        return Err(Error::InvalidConfig(format!("sets must embed at least p_max = {p_max} lags")));
    }
    if fit.len() < p_max + 1 || valid.is_empty() {
        return Err(Error::InsufficientData("too few rows for order selection".into()));
    }
    let n = fit.len();
    let means: Vec<f64> = (0..p_max).map(|j| fit.inputs.column(j).mean()).collect();
    let y_mean = fit.targets.iter().sum::<f64>() / n as f64;
    let xc = DMatrix::from_fn(n, p_max, |i, j| fit.inputs[(i, j)] - means[j]);
    let yc = nalgebra::DVector::from_iterator(n, fit.targets.iter().map(|v| v - y_mean));
    let xt = xc.transpose();
    let gram = &xt * &xc;
    let rhs = &xt * &yc;

    let mut best = (f64::INFINITY, 1usize);
    for p in 1..=p_max {
        let mut a = gram.view((0, 0), (p, p)).into_owned();
        for i in 0..p {
            a[(i, i)] += AR_JITTER;
        }
        let b = rhs.rows(0, p).into_owned();
        let Ok(phi) = solve_spd(&a, &b) else { continue };
        let c = y_mean - (0..p).map(|j| phi[j] * means[j]).sum::<f64>();
        let pred: Vec<f64> = (0..valid.len())
            .map(|r| (c + (0..p).map(|j| phi[j] * valid.inputs[(r, j)]).sum::<f64>()).max(0.0))
            .collect();
        let score = metrics::nrmse(&valid.targets, &pred, None).unwrap_or(f64::INFINITY);
        if score < best.0 {
            best = (score, p);
        }
    }
    if !best.0.is_finite() {
        return Err(Error::Singular("no order produced a finite validation score".into()));
    }
    Ok(best.1)
}

/// Partial autocorrelations at lags `1..=max_lag` by Durbin-Levinson, using
/// only pairs where both points are valid.
pub fn pacf(values: &[f64], valid: &[bool], max_lag: usize) -> Result<Vec<f64>> {
    if values.len() != valid.len() {
        return Err(Error::LengthMismatch { expected: values.len(), actual: valid.len() });
    }
    if max_lag == 0 || values.len() <= 3 * max_lag {
        return Err(Error::InsufficientData(format!("{} points for {max_lag} lags", values.len())));
    }
    let n_valid = valid.iter().filter(|&&v| v).count();
    if n_valid == 0 {
        return Err(Error::EmptySample);
    }
    let mean = values.iter().zip(valid).filter(|(_, &v)| v).map(|(x, _)| x).sum::<f64>() / n_valid as f64;
    let acov = |k: usize| -> f64 {
        (0..values.len() - k)
            .filter(|&t| valid[t] && valid[t + k])
            .map(|t| (values[t] - mean) * (values[t + k] - mean))
            .sum::<f64>()
            / n_valid as f64
    };
    let c0 = acov(0);
    if !(c0 > 0.0) {
        return Err(Error::UndefinedNormalization);
    }
    let r: Vec<f64> = (0..=max_lag).map(|k| acov(k) / c0).collect();

    let mut out = Vec::with_capacity(max_lag);
    let mut phi: Vec<f64> = Vec::new();
    for k in 1..=max_lag {
        let num = r[k] - (1..k).map(|j| phi[j - 1] * r[k - j]).sum::<f64>();
        let den = 1.0 - (1..k).map(|j| phi[j - 1] * r[j]).sum::<f64>();
        let pkk = if den.abs() > 0.0 { num / den } else { 0.0 };
        let mut next = vec![0.0; k];
        for j in 1..k {
            next[j - 1] = phi[j - 1] - pkk * phi[k - j - 1];
        }
        next[k - 1] = pkk;
        phi = next;
        out.push(pkk);
    }
    Ok(out)
}

/// Lag of the first local minimum of a PACF sequence (`pacf[0]` is lag 1).
pub fn first_local_minimum(pacf: &[f64]) -> usize {
    for k in 1..pacf.len().saturating_sub(1) {
        if pacf[k] < pacf[k - 1] && pacf[k] <= pacf[k + 1] {
            return k + 1;
        }
    }
    pacf.len()
}

pub fn select_p_pacf(values: &[f64], valid: &[bool], max_lag: usize) -> Result<usize> {
    Ok(first_local_minimum(&pacf(values, valid, max_lag)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeseries::{QcFlags, SiteMeta};

    fn series(ghi: Vec<f64>, cs: Vec<f64>) -> IrradianceSeries {
        let n = ghi.len();
        IrradianceSeries::new(
            SiteMeta::new("t", 0.0, 0.0, 0.0, 0).unwrap(),
            1800,
            (0..n as i64).map(|i| i * 1800).collect(),
            ghi,
            Some(cs),
            vec![QcFlags::empty(); n],
        )
        .unwrap()
    }

    #[test]
    fn persistence_alignment() {
        let s = series(vec![1.0, 2.0, 3.0], vec![100.0; 3]);
        let inp = BenchmarkInputs::new(&s, 1, 10.0).unwrap();
        let p = persistence(&inp);
        assert_eq!(p.predictions, vec![1.0, 2.0]);
        assert_eq!(p.target_times, vec![1800, 3600]);
    }

    #[test]
    fn smart_persistence_product_and_fallback() {
        let s = series(vec![0.0, 0.0, 300.0, 100.0], vec![5.0, 400.0, 600.0, 600.0]);
        let inp = BenchmarkInputs::new(&s, 1, 10.0).unwrap();
        let sp = smart_persistence(&inp);
        // Anchor 0 is night: clearsky fallback.
        assert_eq!(sp.predictions[0], 400.0);
        assert_eq!(sp.predictions[1], 0.0);
        assert!((sp.predictions[2] - 0.5 * 600.0).abs() < 1e-12);
        assert_eq!(clearsky_naive(&inp).predictions, vec![400.0, 600.0, 600.0]);
    }

    #[test]
    fn cliper_blend() {
        let c = Cliper { rho: 0.6, k_bar: 0.7 };
        let s = series(vec![500.0, 500.0], vec![500.0, 1000.0]);
        let inp = BenchmarkInputs::new(&s, 1, 10.0).unwrap();
        assert!((c.forecast(&inp).predictions[0] - 880.0).abs() < 1e-9);
    }

    #[test]
    fn smoothing_recursion() {
        let k = CsiSeries { values: vec![1.0, 0.0, 0.3], validity: vec![true, true, false] };
        assert_eq!(smoothed_csi(&k, 0.5), vec![1.0, 0.5, 0.5]);
        let grid = es_alpha_grid();
        assert_eq!(grid.len(), 20);
        assert!((grid[19] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn artu_clamps() {
        let a = Artu { coefficients: Some([2.4, 0.0, 0.0]) };
        let s = series(vec![100.0; 3], vec![100.0; 3]);
        let inp = BenchmarkInputs::new(&s, 1, 10.0).unwrap();
        assert!(a.forecast(&inp).predictions.iter().all(|&v| (v - 200.0).abs() < 1e-9));
    }

    #[test]
    fn comb_mean_and_alignment() {
        let mk = |id: &str, v: f64| PointForecastSet {
            model_id: id.into(),
            horizon_steps: 1,
            target_times: vec![0],
            predictions: vec![v],
        };
        let c = comb(&[mk("SP", 100.0), mk("CLIPER", 200.0), mk("ES", 300.0), mk("ARTU", 400.0)]).unwrap();
        assert_eq!(c.predictions, vec![250.0]);
        let mut bad = mk("ES", 1.0);
        bad.target_times = vec![5];
        assert!(comb(&[mk("SP", 1.0), bad]).is_err());
    }

    #[test]
    fn first_minimum_rule() {
        assert_eq!(first_local_minimum(&[0.9, 0.5, 0.3, 0.1, 0.2, 0.05]), 4);
        assert_eq!(first_local_minimum(&[0.9, 0.5, 0.3, 0.1]), 4);
        assert_eq!(first_local_minimum(&[0.1, 0.2, 0.3]), 3);
    }

    #[test]
    fn pacf_lag_one_equals_acf() {
        let v: Vec<f64> = (0..60).map(|i| ((i * 17) % 11) as f64).collect();
        let ok = vec![true; 60];
        let p = pacf(&v, &ok, 5).unwrap();
        let m = v.iter().sum::<f64>() / 60.0;
        let c0: f64 = v.iter().map(|x| (x - m).powi(2)).sum();
        let c1: f64 = (0..59).map(|t| (v[t] - m) * (v[t + 1] - m)).sum();
        assert!((p[0] - c1 / c0).abs() < 1e-12);
        assert!(pacf(&v, &ok, 20).is_err());
    }

    #[test]
    fn exact_ar2_recovery() {
        let mut z = vec![3.0, -1.0];
        for t in 2..300 {
            z.push(0.2 + 1.8 * z[t - 1] - 0.95 * z[t - 2]);
        }
        let times: Vec<i64> = (0..z.len() as i64).collect();
        let set = build_supervised_values(&z, &times, 2, 1, |_| true).unwrap();
        let m = fit_ar_ls(&set, ArVariant::Raw).unwrap();
        assert!((m.coefficients[0] - 1.8).abs() < 1e-9, "{m:?}");
        assert!((m.coefficients[1] + 0.95).abs() < 1e-9);
        assert!((m.intercept - 0.2).abs() < 1e-8);
    }
}
