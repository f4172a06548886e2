//! Deterministic and probabilistic scores and the Mann-Whitney U test.
//!
//! Every score takes an optional mask; `None` means all points. Normalized
//! scores divide by the mean observation over the masked points.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::probabilistic::{crps_quantile, QuantileForecast};

fn selected<'a>(n: usize, mask: Option<&'a [bool]>) -> Result<impl Iterator<Item = usize> + 'a> {
    if let Some(m) = mask {
        if m.len() != n {
            return Err(Error::LengthMismatch { expected: n, actual: m.len() });
        }
    }
    Ok((0..n).filter(move |&i| mask.is_none_or(|m| m[i])))
}

fn aligned(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { expected: a.len(), actual: b.len() });
    }
    Ok(())
}

/// Mean of `y` over the mask.
pub fn masked_mean(y: &[f64], mask: Option<&[bool]>) -> Result<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for i in selected(y.len(), mask)? {
        sum += y[i];
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptySample);
    }
    Ok(sum / n as f64)
}

fn normalizer(y: &[f64], mask: Option<&[bool]>) -> Result<f64> {
    let m = masked_mean(y, mask)?;
    if !(m > 0.0) {
        return Err(Error::UndefinedNormalization);
    }
    Ok(m)
}

fn mean_of(n: usize, mask: Option<&[bool]>, f: impl Fn(usize) -> f64) -> Result<f64> {
    let (mut sum, mut k) = (0.0, 0usize);
    for i in selected(n, mask)? {
        sum += f(i);
        k += 1;
    }
    if k == 0 {
        return Err(Error::EmptySample);
    }
    Ok(sum / k as f64)
}

pub fn rmse(y: &[f64], yhat: &[f64], mask: Option<&[bool]>) -> Result<f64> {
    aligned(y, yhat)?;
    Ok(mean_of(y.len(), mask, |i| (y[i] - yhat[i]).powi(2))?.sqrt())
}

pub fn nrmse(y: &[f64], yhat: &[f64], mask: Option<&[bool]>) -> Result<f64> {
    let e = rmse(y, yhat, mask)?;
    Ok(e / normalizer(y, mask)?)
}

pub fn nmae(y: &[f64], yhat: &[f64], mask: Option<&[bool]>) -> Result<f64> {
    aligned(y, yhat)?;
    let e = mean_of(y.len(), mask, |i| (y[i] - yhat[i]).abs())?;
    Ok(e / normalizer(y, mask)?)
}

/// Signed bias `mean(y - ŷ) / mean(y)`; over-forecasting is negative.
pub fn nmbe(y: &[f64], yhat: &[f64], mask: Option<&[bool]>) -> Result<f64> {
    aligned(y, yhat)?;
    let e = mean_of(y.len(), mask, |i| y[i] - yhat[i])?;
    Ok(e / normalizer(y, mask)?)
}

pub fn r2(y: &[f64], yhat: &[f64], mask: Option<&[bool]>) -> Result<f64> {
    aligned(y, yhat)?;
    let m = masked_mean(y, mask)?;
    let (mut sse, mut sst) = (0.0, 0.0);
    for i in selected(y.len(), mask)? {
        sse += (y[i] - yhat[i]).powi(2);
        sst += (y[i] - m).powi(2);
    }
    if sst == 0.0 {
        return Err(Error::UndefinedNormalization);
    }
    Ok(1.0 - sse / sst)
}

fn check_bounds(lower: &[f64], upper: &[f64]) -> Result<()> {
    aligned(lower, upper)?;
    match lower.iter().zip(upper).position(|(l, u)| !(l <= u)) {
        Some(i) => Err(Error::CrossingBounds(i)),
        None => Ok(()),
    }
}

/// Fraction of masked points with `lower ≤ y ≤ upper`.
pub fn picp(y: &[f64], lower: &[f64], upper: &[f64], mask: Option<&[bool]>) -> Result<f64> {
    aligned(y, lower)?;
    check_bounds(lower, upper)?;
    mean_of(y.len(), mask, |i| if lower[i] <= y[i] && y[i] <= upper[i] { 1.0 } else { 0.0 })
}

pub fn mil(lower: &[f64], upper: &[f64], mask: Option<&[bool]>) -> Result<f64> {
    check_bounds(lower, upper)?;
    mean_of(lower.len(), mask, |i| upper[i] - lower[i])
}

pub fn nmil(y: &[f64], lower: &[f64], upper: &[f64], mask: Option<&[bool]>) -> Result<f64> {
    aligned(y, lower)?;
    Ok(mil(lower, upper, mask)? / normalizer(y, mask)?)
}

/// MIL plus `2/α` times the mean distance of uncovered observations to the interval.
pub fn interval_score(
    y: &[f64],
    lower: &[f64],
    upper: &[f64],
    alpha: f64,
    mask: Option<&[bool]>,
) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidConfig(format!("alpha {alpha} outside (0, 1)")));
    }
    aligned(y, lower)?;
    let width = mil(lower, upper, mask)?;
    let penalty = mean_of(y.len(), mask, |i| {
        if y[i] < lower[i] {
            lower[i] - y[i]
        } else if y[i] > upper[i] {
            y[i] - upper[i]
        } else {
            0.0
        }
    })?;
    Ok(width + 2.0 / alpha * penalty)
}

/// Mean quantile CRPS and its normalized counterpart.
pub fn crps_aggregate(qf: &QuantileForecast, y: &[f64], mask: Option<&[bool]>) -> Result<(f64, f64)> {
    if qf.len() != y.len() {
        return Err(Error::LengthMismatch { expected: y.len(), actual: qf.len() });
    }
    let crps = mean_of(y.len(), mask, |i| crps_quantile(&qf.quantiles[i], y[i]))?;
    Ok((crps, crps / normalizer(y, mask)?))
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model_id: String,
    pub site_id: String,
    pub horizon_steps: usize,
    pub n_points: usize,
    pub nrmse: f64,
    pub nmae: f64,
    pub nmbe: f64,
    pub r2: f64,
    pub crps: Option<f64>,
    pub mil: Option<f64>,
    pub ncrps: Option<f64>,
    pub nmil: Option<f64>,
    pub picp: Option<f64>,
    pub interval_score: Option<f64>,
    pub mask_policy: String,
}

/// Prediction intervals and quantiles scored alongside a point forecast.
pub struct ProbabilisticInputs<'a> {
    pub quantiles: &'a QuantileForecast,
    pub lower: &'a [f64],
    pub upper: &'a [f64],
    pub alpha: f64,
}

impl MetricsReport {
    #[allow(clippy::too_many_arguments)]
    pub fn compute(
        model_id: &str,
        site_id: &str,
        horizon_steps: usize,
        y: &[f64],
        yhat: &[f64],
        mask: Option<&[bool]>,
        mask_policy: &str,
        prob: Option<ProbabilisticInputs<'_>>,
    ) -> Result<Self> {
        let n_points = selected(y.len(), mask)?.count();
        let mut report = MetricsReport {
            model_id: model_id.to_string(),
            site_id: site_id.to_string(),
            horizon_steps,
            n_points,
            nrmse: nrmse(y, yhat, mask)?,
            nmae: nmae(y, yhat, mask)?,
            nmbe: nmbe(y, yhat, mask)?,
            r2: r2(y, yhat, mask)?,
            crps: None,
            mil: None,
            ncrps: None,
            nmil: None,
            picp: None,
            interval_score: None,
            mask_policy: mask_policy.to_string(),
        };
        if let Some(p) = prob {
            let (crps, ncrps) = crps_aggregate(p.quantiles, y, mask)?;
            report.crps = Some(crps);
            report.ncrps = Some(ncrps);
            report.mil = Some(mil(p.lower, p.upper, mask)?);
            report.nmil = Some(nmil(y, p.lower, p.upper, mask)?);
            report.picp = Some(picp(y, p.lower, p.upper, mask)?);
            report.interval_score = Some(interval_score(y, p.lower, p.upper, p.alpha, mask)?);
        }
        Ok(report)
    }

    /// Looks up a metric by its field name.
    pub fn metric(&self, name: &str) -> Option<f64> {
        match name {
            "nrmse" => Some(self.nrmse),
            "nmae" => Some(self.nmae),
            "nmbe" => Some(self.nmbe),
            "r2" => Some(self.r2),
            "crps" => self.crps,
            "mil" => self.mil,
            "ncrps" => self.ncrps,
            "nmil" => self.nmil,
            "picp" => self.picp,
            "interval_score" => self.interval_score,
            _ => None,
        }
    }

    pub const METRIC_NAMES: [&'static str; 10] = [
        "nrmse", "nmae", "nmbe", "r2", "crps", "mil", "ncrps", "nmil", "picp", "interval_score",
    ];
}

// ---------------------------------------------------------------------------
// Mann-Whitney U
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UTestMethod {
    Exact,
    NormalApproximation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UTestResult {
    /// U statistic of sample `a`.
    pub u_statistic: f64,
    pub p_value: f64,
    pub n_a: usize,
    pub n_b: usize,
    pub method: UTestMethod,
}

impl UTestResult {
    /// U statistic of sample `b`.
    pub fn u_other(&self) -> f64 {
        (self.n_a * self.n_b) as f64 - self.u_statistic
    }
}

/// Exact enumeration is used up to this value of `n_a · n_b`.
pub const EXACT_LIMIT: usize = 64;

/// Midranks (1-based) doubled so that ties stay integral.
fn doubled_midranks(values: &[f64]) -> (Vec<u64>, Vec<usize>) {
    let n = values.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0u64; n];
    let mut tie_sizes = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && values[idx[j]] == values[idx[i]] {
            j += 1;
        }
        // Ranks i+1..=j, midrank (i+1+j)/2, doubled.
        let r2 = (i + 1 + j) as u64;
        for &k in &idx[i..j] {
            ranks[k] = r2;
        }
        if j - i > 1 {
            tie_sizes.push(j - i);
        }
        i = j;
    }
    (ranks, tie_sizes)
}

/// Two-sided Mann-Whitney U test with midranks for ties.
///
/// Exact when `n_a · n_b ≤ 64`; otherwise a normal approximation with
/// tie-corrected variance and continuity correction.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<UTestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(Error::NonFinite("Mann-Whitney sample"));
    }
    let (n_a, n_b) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks2, ties) = doubled_midranks(&pooled);
    let rank_sum2: u64 = ranks2[..n_a].iter().sum();
    // 2·U_a = 2·R_a − n_a(n_a+1)
    let u2 = rank_sum2 - (n_a * (n_a + 1)) as u64;
    let u = u2 as f64 / 2.0;

    if n_a * n_b <= EXACT_LIMIT {
        let p = if ties.is_empty() {
            exact_p_no_ties(n_a, n_b, (u2 / 2) as usize)
        } else {
            exact_p_enumerated(&ranks2, n_a, u2)
        };
        return Ok(UTestResult { u_statistic: u, p_value: p, n_a, n_b, method: UTestMethod::Exact });
    }

    let p = normal_p(n_a, n_b, u, &ties);
    Ok(UTestResult { u_statistic: u, p_value: p, n_a, n_b, method: UTestMethod::NormalApproximation })
}

/// Normal-approximation two-sided p-value.
pub fn normal_p(n_a: usize, n_b: usize, u: f64, tie_sizes: &[usize]) -> f64 {
    let (na, nb) = (n_a as f64, n_b as f64);
    let n = na + nb;
    let mean = na * nb / 2.0;
    let tie_term: f64 = tie_sizes.iter().map(|&t| (t * t * t - t) as f64).sum();
    let var = na * nb / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if !(var > 0.0) {
        return 1.0;
    }
    let z = ((u - mean).abs() - 0.5).max(0.0) / var.sqrt();
    erfc(z / std::f64::consts::SQRT_2).min(1.0)
}

/// Counts of each U value under the null, by the recursion
/// `f(m, n, u) = f(m-1, n, u-n) + f(m, n-1, u)`.
fn u_distribution(n_a: usize, n_b: usize) -> Vec<f64> {
    let max_u = n_a * n_b;
    // table[m][n] holds counts for sizes (m, n); built row by row.
    let mut prev: Vec<Vec<f64>> = (0..=n_b).map(|_| vec![1.0]).collect();
    for m in 1..=n_a {
        let mut cur: Vec<Vec<f64>> = Vec::with_capacity(n_b + 1);
        cur.push(vec![1.0]);
        for n in 1..=n_b {
            let mut counts = vec![0.0; m * n + 1];
            for (u, c) in prev[n].iter().enumerate() {
                counts[u + n] += c;
            }
            for (u, c) in cur[n - 1].iter().enumerate() {
                counts[u] += c;
            }
            cur.push(counts);
        }
        prev = cur;
    }
    let dist = prev.swap_remove(n_b);
    debug_assert_eq!(dist.len(), max_u + 1);
    dist
}

fn exact_p_no_ties(n_a: usize, n_b: usize, u: usize) -> f64 {
    let dist = u_distribution(n_a, n_b);
    let total: f64 = dist.iter().sum();
    let lower: f64 = dist[..=u].iter().sum();
    let upper: f64 = dist[u..].iter().sum();
    (2.0 * lower.min(upper) / total).min(1.0)
}

/// Exact null distribution under ties by enumerating every assignment of
/// `n_a` of the pooled ranks to sample `a`.
fn exact_p_enumerated(ranks2: &[u64], n_a: usize, u2_obs: u64) -> f64 {
    let n = ranks2.len();
    let offset = (n_a * (n_a + 1)) as u64;
    let (mut total, mut lower, mut upper) = (0u64, 0u64, 0u64);
    let mut chosen: Vec<usize> = (0..n_a).collect();
    loop {
        let s: u64 = chosen.iter().map(|&i| ranks2[i]).sum();
        let u2 = s - offset;
        total += 1;
        if u2 <= u2_obs {
            lower += 1;
        }
        if u2 >= u2_obs {
            upper += 1;
        }
        // Next combination in lexicographic order.
        let mut i = n_a;
        loop {
            if i == 0 {
                return (2.0 * lower.min(upper) as f64 / total as f64).min(1.0);
            }
            i -= 1;
            if chosen[i] < n - n_a + i {
                chosen[i] += 1;
                for j in i + 1..n_a {
                    chosen[j] = chosen[j - 1] + 1;
                }
                break;
            }
        }
    }
}
