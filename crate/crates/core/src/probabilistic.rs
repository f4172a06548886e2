//! Quantile regression, lookup-table intervals and quantile CRPS.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeseries::{format_timestamp, SupervisedSet};

/// Number of quantile levels, `i / 100` for `i = 0..=100`.
pub const N_LEVELS: usize = 101;

/// Levels 0 and 1 are fitted at these values instead.
pub const QR_LEVEL_CLAMP: (f64, f64) = (0.005, 0.995);

pub fn levels() -> Vec<f64> {
    (0..N_LEVELS).map(|i| i as f64 / 100.0).collect()
}

pub fn pinball_loss(u: f64, tau: f64) -> f64 {
    if u >= 0.0 {
        tau * u
    } else {
        (tau - 1.0) * u
    }
}

pub fn mean_pinball_loss(y: &[f64], q: &[f64], tau: f64) -> f64 {
    y.iter().zip(q).map(|(a, b)| pinball_loss(a - b, tau)).sum::<f64>() / y.len().max(1) as f64
}

// ---------------------------------------------------------------------------
// Quantile regression
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QrOptions {
    pub max_iter: usize,
    /// Relative duality gap at which the solver stops.
    pub tolerance: f64,
}

impl Default for QrOptions {
    fn default() -> Self {
        Self { max_iter: 500, tolerance: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QrFit {
    pub tau: f64,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    /// Mean pinball loss on the training rows.
    pub objective: f64,
    pub iterations: usize,
}

impl QrFit {
    pub fn predict_row(&self, row: impl Iterator<Item = f64>) -> f64 {
        self.intercept + row.zip(&self.coefficients).map(|(x, c)| x * c).sum::<f64>()
    }
}

const STEP_FRACTION: f64 = 0.99995;

fn max_step(v: &DVector<f64>, dv: &DVector<f64>) -> f64 {
    v.iter()
        .zip(dv.iter())
        .filter(|(_, d)| **d < 0.0)
        .map(|(x, d)| -x / d)
        .fold(1.0 / STEP_FRACTION, f64::min)
}

struct Newton {
    da: DVector<f64>,
    db: DVector<f64>,
    dz: DVector<f64>,
    dw: DVector<f64>,
}

/// Affine quantile regression with an implicit intercept.
///
/// Minimizes `Σ ρ_τ(y_i − c − x_iᵀβ)` by a primal-dual interior point method
/// on the bounded dual `max yᵀa  s.t.  Xᵀa = (1−τ)Xᵀ1, 0 ≤ a ≤ 1`. `x` may have
/// zero columns for an intercept-only fit.
pub fn quantile_regression(x: &DMatrix<f64>, y: &[f64], tau: f64, opts: &QrOptions) -> Result<QrFit> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidConfig(format!("quantile level {tau} outside (0, 1)")));
    }
    let n = y.len();
    if x.nrows() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: x.nrows() });
    }
    let p_in = x.ncols();
    if n < p_in + 2 {
        return Err(Error::InsufficientData(format!("{n} rows for {p_in} inputs")));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("quantile regression data"));
    }

    // Standardize inputs and target; the fit maps back exactly.
    let col_mean: Vec<f64> = (0..p_in).map(|j| x.column(j).mean()).collect();
    let col_scale: Vec<f64> = (0..p_in)
        .map(|j| {
            let m = col_mean[j];
            let s = (x.column(j).iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64).sqrt();
            if s > 0.0 { s } else { 1.0 }
        })
        .collect();
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let y_scale = {
        let s = (y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        if s > 0.0 { s } else { 1.0 }
    };
    let p = p_in + 1;
    let xs = DMatrix::from_fn(n, p, |i, j| if j == 0 { 1.0 } else { (x[(i, j - 1)] - col_mean[j - 1]) / col_scale[j - 1] });
    let ys = DVector::from_iterator(n, y.iter().map(|v| (v - y_mean) / y_scale));
    let xt = xs.transpose();

    let primal_obj = |beta: &DVector<f64>| -> f64 {
        let r = &ys - &xs * beta;
        r.iter().map(|&u| pinball_loss(u, tau)).sum()
    };
    let dual_obj = |a: &DVector<f64>| -> f64 { ys.dot(a) - (1.0 - tau) * ys.sum() };

    let b = &xt * DVector::from_element(n, 1.0 - tau);
    let mut a = DVector::from_element(n, 1.0 - tau);
    let mut beta = {
        let gram = &xt * &xs;
        let rhs = &xt * &ys;
        let mut g = gram.clone();
        for i in 0..p {
            g[(i, i)] += 1e-10;
        }
        crate::linalg::solve_spd(&g, &rhs)?
    };
    let r0 = &ys - &xs * &beta;
    let delta = 0.1 * r0.iter().map(|v| v.abs()).sum::<f64>() / n as f64 + 1e-6;
    let mut w = r0.map(|v| v.max(0.0) + delta);
    let mut z = r0.map(|v| (-v).max(0.0) + delta);

    let solve = |a: &DVector<f64>,
                 s: &DVector<f64>,
                 z: &DVector<f64>,
                 w: &DVector<f64>,
                 beta: &DVector<f64>,
                 c1: &DVector<f64>,
                 c2: &DVector<f64>|
     -> Result<Newton> {
        let r_p = &b - &xt * a;
        let r_d = &ys - &xs * beta - w + z;
        let d = DVector::from_fn(n, |i, _| w[i] / s[i] + z[i] / a[i]);
        let q = DVector::from_fn(n, |i, _| r_d[i] - c2[i] / s[i] + c1[i] / a[i]);
        let dinv = d.map(|v| 1.0 / v);
        let mut xd = xs.clone();
        for (i, mut row) in xd.row_iter_mut().enumerate() {
            row *= dinv[i];
        }
        let mut m = DMatrix::zeros(p, p);
        m.gemm(1.0, &xt, &xd, 0.0);
        let rhs = &xt * q.component_mul(&dinv) - r_p;
        let chol = m
            .cholesky()
            .ok_or_else(|| Error::Singular("quantile regression normal matrix".into()))?;
        let db = chol.solve(&rhs);
        let da = (&q - &xs * &db).component_mul(&dinv);
        let dz = DVector::from_fn(n, |i, _| (c1[i] - z[i] * da[i]) / a[i]);
        let dw = DVector::from_fn(n, |i, _| (c2[i] + w[i] * da[i]) / s[i]);
        Ok(Newton { da, db, dz, dw })
    };

    let mut s = a.map(|v| 1.0 - v);
    let mut iterations = 0;
    loop {
        let pobj = primal_obj(&beta);
        let gap = pobj - dual_obj(&a);
        if gap.abs() <= opts.tolerance * (1.0 + pobj.abs()) {
            break;
        }
        if iterations >= opts.max_iter {
            return Err(Error::NonConvergence { iterations, objective: pobj * y_scale / n as f64 });
        }
        iterations += 1;

        let c1 = -a.component_mul(&z);
        let c2 = -s.component_mul(&w);
        let aff = solve(&a, &s, &z, &w, &beta, &c1, &c2)?;
        let neg_da = -&aff.da;
        let ap = max_step(&a, &aff.da).min(max_step(&s, &neg_da)).min(1.0);
        let ad = max_step(&z, &aff.dz).min(max_step(&w, &aff.dw)).min(1.0);
        let mu = a.dot(&z) + s.dot(&w);
        let a_aff = &a + ap * &aff.da;
        let s_aff = &s - ap * &aff.da;
        let mu_aff = a_aff.dot(&(&z + ad * &aff.dz)) + s_aff.dot(&(&w + ad * &aff.dw));
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);
        let target = sigma * mu / (2 * n) as f64;

        let c1 = DVector::from_fn(n, |i, _| target - a[i] * z[i] - aff.da[i] * aff.dz[i]);
        let c2 = DVector::from_fn(n, |i, _| target - s[i] * w[i] + aff.da[i] * aff.dw[i]);
        let step = solve(&a, &s, &z, &w, &beta, &c1, &c2)?;
        let neg_da = -&step.da;
        let ap = (STEP_FRACTION * max_step(&a, &step.da).min(max_step(&s, &neg_da))).min(1.0);
        let ad = (STEP_FRACTION * max_step(&z, &step.dz).min(max_step(&w, &step.dw))).min(1.0);
        a += ap * &step.da;
        s -= ap * &step.da;
        beta += ad * &step.db;
        z += ad * &step.dz;
        w += ad * &step.dw;
        if beta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("quantile regression iterate"));
        }
    }

    let coefficients: Vec<f64> = (0..p_in).map(|j| beta[j + 1] * y_scale / col_scale[j]).collect();
    let intercept = y_mean + y_scale * beta[0]
        - coefficients.iter().zip(&col_mean).map(|(c, m)| c * m).sum::<f64>();
    let objective = mean_affine_pinball(x, y, tau, intercept, &coefficients);
    let (intercept, coefficients, objective) = match polish_to_vertex(x, y, tau, intercept, &coefficients) {
        Some((b0, b, obj)) if obj <= objective => (b0, b, obj),
        _ => (intercept, coefficients, objective),
    };
    Ok(QrFit { tau, intercept, coefficients, objective, iterations })
}

fn mean_affine_pinball(x: &DMatrix<f64>, y: &[f64], tau: f64, intercept: f64, coefficients: &[f64]) -> f64 {
    let n = y.len();
    (0..n)
        .map(|i| {
            let fit = intercept + coefficients.iter().enumerate().map(|(j, c)| x[(i, j)] * c).sum::<f64>();
            pinball_loss(y[i] - fit, tau)
        })
        .sum::<f64>()
        / n as f64
}

/// Snaps an interior-point solution onto the nearby optimal vertex: the fit
/// that interpolates the `p + 1` observations with the smallest residuals.
fn polish_to_vertex(
    x: &DMatrix<f64>,
    y: &[f64],
    tau: f64,
    intercept: f64,
    coefficients: &[f64],
) -> Option<(f64, Vec<f64>, f64)> {
    let (n, p) = x.shape();
    let k = p + 1;
    if n < k {
        return None;
    }
    let mut order: Vec<(f64, usize)> = (0..n)
        .map(|i| {
            let fit = intercept + coefficients.iter().enumerate().map(|(j, c)| x[(i, j)] * c).sum::<f64>();
            ((y[i] - fit).abs(), i)
        })
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let rows: Vec<usize> = order[..k].iter().map(|&(_, i)| i).collect();
    let design = DMatrix::from_fn(k, k, |r, c| if c == 0 { 1.0 } else { x[(rows[r], c - 1)] });
    let rhs = DVector::from_iterator(k, rows.iter().map(|&i| y[i]));
    let sol = design.lu().solve(&rhs)?;
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let b: Vec<f64> = sol.iter().skip(1).copied().collect();
    let obj = mean_affine_pinball(x, y, tau, sol[0], &b);
    Some((sol[0], b, obj))
}

/// Fits one quantile level on a supervised set; extreme levels are clamped.
pub fn fit_quantile_regression(train: &SupervisedSet, tau: f64, opts: &QrOptions) -> Result<QrFit> {
    let t = tau.clamp(QR_LEVEL_CLAMP.0, QR_LEVEL_CLAMP.1);
    let mut fit = quantile_regression(&train.inputs, &train.targets, t, opts)?;
    fit.tau = tau;
    Ok(fit)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileModel {
    pub n_lags: usize,
    pub fits: Vec<QrFit>,
}

impl QuantileModel {
    /// Fits every level on the centile grid.
    pub fn fit(train: &SupervisedSet, opts: &QrOptions) -> Result<Self> {
        let fits = levels()
            .into_iter()
            .map(|tau| fit_quantile_regression(train, tau, opts))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { n_lags: train.n_lags, fits })
    }
}

/// Evaluates all levels, sorts each row to remove crossings and clamps at zero.
pub fn predict_quantiles_qr(
    model: &QuantileModel,
    x: &DMatrix<f64>,
    target_times: &[i64],
) -> Result<QuantileForecast> {
    if model.fits.len() != N_LEVELS {
        return Err(Error::DimensionMismatch { expected: N_LEVELS, actual: model.fits.len() });
    }
    if x.ncols() != model.n_lags {
        return Err(Error::DimensionMismatch { expected: model.n_lags, actual: x.ncols() });
    }
    if x.nrows() != target_times.len() {
        return Err(Error::LengthMismatch { expected: x.nrows(), actual: target_times.len() });
    }
    let quantiles = (0..x.nrows())
        .map(|i| {
            let raw: Vec<f64> = model.fits.iter().map(|f| f.predict_row(x.row(i).iter().copied())).collect();
            repair_quantiles(raw)
        })
        .collect();
    Ok(QuantileForecast { target_times: target_times.to_vec(), quantiles })
}

/// Ascending sort followed by clamping at zero.
pub fn repair_quantiles(mut q: Vec<f64>) -> Vec<f64> {
    q.sort_by(f64::total_cmp);
    for v in &mut q {
        *v = v.max(0.0);
    }
    q
}

// ---------------------------------------------------------------------------
// Lookup tables
// ---------------------------------------------------------------------------

pub const MIN_LOOKUP_RESIDUALS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookupTable {
    /// `k[c]` is the scaling factor at coverage `c / 100`.
    pub k: Vec<f64>,
    pub sigma_hat: f64,
}

/// Linear-interpolation sample quantile of sorted data.
fn sorted_quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn build_lookup_table(residuals: &[f64]) -> Result<LookupTable> {
    if residuals.len() < MIN_LOOKUP_RESIDUALS {
        return Err(Error::InsufficientData(format!(
            "{} residuals, need {MIN_LOOKUP_RESIDUALS}",
            residuals.len()
        )));
    }
    if residuals.iter().any(|r| !r.is_finite()) {
        return Err(Error::NonFinite("residuals"));
    }
    let n = residuals.len() as f64;
    let mean = residuals.iter().sum::<f64>() / n;
    let sigma_hat = (residuals.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n).sqrt();
    if sigma_hat == 0.0 {
        return Ok(LookupTable { k: vec![0.0; N_LEVELS], sigma_hat });
    }
    let mut scaled: Vec<f64> = residuals.iter().map(|r| r.abs() / sigma_hat).collect();
    scaled.sort_by(f64::total_cmp);
    let mut k: Vec<f64> = (0..N_LEVELS).map(|c| sorted_quantile(&scaled, c as f64 / 100.0)).collect();
    k[0] = 0.0;
    Ok(LookupTable { k, sigma_hat })
}

impl LookupTable {
    /// Scaling factor at any coverage in `[0, 1]`, interpolated between centiles.
    pub fn k_at(&self, coverage: f64) -> f64 {
        let h = coverage.clamp(0.0, 1.0) * 100.0;
        let lo = h.floor() as usize;
        let hi = (lo + 1).min(N_LEVELS - 1);
        self.k[lo] + (h - lo as f64) * (self.k[hi] - self.k[lo])
    }
}

/// Central interval with miscoverage `alpha` around a point forecast.
pub fn interval_from_lookup(point: f64, table: &LookupTable, alpha: f64) -> (f64, f64) {
    let half = table.k_at(1.0 - alpha) * table.sigma_hat;
    ((point - half).max(0.0), point + half)
}

pub fn quantiles_from_lookup(points: &[f64], target_times: &[i64], table: &LookupTable) -> Result<QuantileForecast> {
    if points.len() != target_times.len() {
        return Err(Error::LengthMismatch { expected: points.len(), actual: target_times.len() });
    }
    let quantiles = points
        .iter()
        .map(|&y| {
            (0..N_LEVELS)
                .map(|i| {
                    let c = (2 * i).abs_diff(100);
                    let off = table.k[c] * table.sigma_hat;
                    let q = if i < 50 { y - off } else { y + off };
                    q.max(0.0)
                })
                .collect()
        })
        .collect();
    Ok(QuantileForecast { target_times: target_times.to_vec(), quantiles })
}

// ---------------------------------------------------------------------------
// Quantile forecasts and CRPS
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileForecast {
    pub target_times: Vec<i64>,
    /// One nondecreasing vector of 101 quantiles per target time.
    pub quantiles: Vec<Vec<f64>>,
}

impl QuantileForecast {
    pub fn len(&self) -> usize {
        self.quantiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.quantiles.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for (i, q) in self.quantiles.iter().enumerate() {
            if q.len() != N_LEVELS {
                return Err(Error::DimensionMismatch { expected: N_LEVELS, actual: q.len() });
            }
            if q.windows(2).any(|w| !(w[0] <= w[1])) || q[0] < 0.0 {
                return Err(Error::CrossingBounds(i));
            }
        }
        Ok(())
    }

    /// Quantile at any level in `[0, 1]` for row `i`, interpolated on the grid.
    pub fn quantile_at(&self, i: usize, level: f64) -> f64 {
        let q = &self.quantiles[i];
        let h = level.clamp(0.0, 1.0) * 100.0;
        let lo = h.floor() as usize;
        let hi = (lo + 1).min(N_LEVELS - 1);
        q[lo] + (h - lo as f64) * (q[hi] - q[lo])
    }

    /// Central interval with miscoverage `alpha` for every row.
    pub fn interval(&self, alpha: f64) -> (Vec<f64>, Vec<f64>) {
        (0..self.len())
            .map(|i| (self.quantile_at(i, alpha / 2.0), self.quantile_at(i, 1.0 - alpha / 2.0)))
            .unzip()
    }

    /// `target_time, q000..q100`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["target_time".to_string()];
        header.extend((0..N_LEVELS).map(|i| format!("q{i:03}")));
        w.write_record(&header).map_err(csv_err)?;
        for (t, q) in self.target_times.iter().zip(&self.quantiles) {
            let mut rec = vec![format_timestamp(*t)];
            rec.extend(q.iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Quantile CRPS, `2 · 0.01 · Σ ρ_{α_i}(y − Q_{α_i})` over the 101 levels.
pub fn crps_quantile(q: &[f64], y: f64) -> f64 {
    let step = 1.0 / (q.len() - 1) as f64;
    2.0 * step
        * q.iter()
            .enumerate()
            .map(|(i, &qi)| pinball_loss(y - qi, i as f64 * step))
            .sum::<f64>()
}

/// `0.01 · Σ |Q_{α_i} − y|` over the 101 levels.
pub fn mean_abs_quantile_deviation(q: &[f64], y: f64) -> f64 {
    0.01 * q.iter().map(|qi| (qi - y).abs()).sum::<f64>()
}
