//! Input/hidden size search by Nelder-Mead over validation nRMSE.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{nelder_mead, train_winner_takes_all, ElmConfig, NelderMeadOptions};
use crate::error::{Error, Result};
use crate::timeseries::{ChronoPartition, SupervisedSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchBounds {
    pub n_input: (usize, usize),
    pub n_hidden: (usize, usize),
}

impl Default for SearchBounds {
    fn default() -> Self {
        Self { n_input: (1, 192), n_hidden: (4, 2000) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchSettings {
    pub bounds: SearchBounds,
    /// Start at `(initial_inputs, 4 · initial_inputs)`.
    pub initial_inputs: usize,
    /// Runs per candidate; the final fit uses the base config's `n_runs`.
    pub search_runs: usize,
    pub max_iter: usize,
    /// Simplex diameter, in neurons, below which the search stops.
    pub x_tol: f64,
    /// Initial simplex offsets as a fraction of the starting point.
    pub initial_step_fraction: f64,
    /// Train candidates on at most this many of the most recent rows.
    pub max_train_rows: Option<usize>,
}

impl Default for SearchSettings {
    fn default() -> Self {
        Self {
            bounds: SearchBounds::default(),
            initial_inputs: 48,
            search_runs: 8,
            max_iter: 40,
            x_tol: 1.0,
            initial_step_fraction: 0.25,
            max_train_rows: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub config: ElmConfig,
    pub objective: f64,
    pub initial_objective: f64,
    /// Every distinct `(n_input, n_hidden, nRMSE)` evaluated, in first-visit order.
    pub evaluations: Vec<(usize, usize, f64)>,
}

/// Rounds a continuous candidate to integers inside the bounds.
pub fn round_candidate(x: &[f64], bounds: &SearchBounds) -> (usize, usize) {
    let clamp = |v: f64, (lo, hi): (usize, usize)| {
        let r = if v.is_finite() { v.round() } else { lo as f64 };
        r.clamp(lo as f64, hi as f64) as usize
    };
    (clamp(x[0], bounds.n_input), clamp(x[1], bounds.n_hidden))
}

pub fn optimize_config(
    partition: &ChronoPartition,
    horizon_steps: usize,
    base: &ElmConfig,
    settings: &SearchSettings,
) -> Result<SearchOutcome> {
    optimize_config_masked(partition, horizon_steps, base, settings, |_| true)
}

/// As [`optimize_config`], scoring only validation rows whose target series
/// index satisfies `keep`.
pub fn optimize_config_masked(
    partition: &ChronoPartition,
    horizon_steps: usize,
    base: &ElmConfig,
    settings: &SearchSettings,
    keep: impl Fn(usize) -> bool,
) -> Result<SearchOutcome> {
    base.validate()?;
    if settings.search_runs == 0 {
        return Err(Error::InvalidConfig("search_runs must be >= 1".into()));
    }
    let bounds = settings.bounds;
    if bounds.n_input.0 == 0 || bounds.n_input.0 > bounds.n_input.1 || bounds.n_hidden.0 == 0
        || bounds.n_hidden.0 > bounds.n_hidden.1
    {
        return Err(Error::InvalidConfig("empty search bounds".into()));
    }

    let mut cache: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut visit_order: Vec<(usize, usize)> = Vec::new();
    let mut sets: Option<(usize, SupervisedSet, SupervisedSet)> = None;
    let mut first_error: Option<Error> = None;

    let mut objective = |x: &[f64]| -> f64 {
        let key = round_candidate(x, &bounds);
        if let Some(&v) = cache.get(&key) {
            return v;
        }
        let (ni, nh) = key;
        if sets.as_ref().is_none_or(|(n, _, _)| *n != ni) {
            match partition.supervised(ni, horizon_steps) {
                Ok((fit, valid, _)) => {
                    let fit = match settings.max_train_rows {
                        Some(m) => fit.tail(m),
                        None => fit,
                    };
                    sets = Some((ni, fit, valid.retain_targets(&keep)));
                }
                Err(e) => {
                    first_error.get_or_insert(e);
                    cache.insert(key, f64::INFINITY);
                    visit_order.push(key);
                    return f64::INFINITY;
                }
            }
        }
        let (_, fit, valid) = sets.as_ref().expect("sets built above");
        let cfg = ElmConfig { n_input: ni, n_hidden: nh, n_runs: settings.search_runs, ..base.clone() };
        let score = match train_winner_takes_all(fit, valid, &cfg) {
            Ok(w) => w.winner_score(),
            Err(e) => {
                first_error.get_or_insert(e);
                f64::INFINITY
            }
        };
        cache.insert(key, score);
        visit_order.push(key);
        score
    };

    let n0 = settings.initial_inputs.clamp(bounds.n_input.0, bounds.n_input.1) as f64;
    let h0 = (4.0 * n0).clamp(bounds.n_hidden.0 as f64, bounds.n_hidden.1 as f64);
    let x0 = [n0, h0];
    let opts = NelderMeadOptions {
        initial_step: vec![
            (settings.initial_step_fraction * n0).max(1.0),
            (settings.initial_step_fraction * h0).max(1.0),
        ],
        x_tol: settings.x_tol,
        max_iter: settings.max_iter,
    };
    let result = match nelder_mead(&mut objective, &x0, &opts) {
        Ok(r) => r,
        Err(Error::NonFinite(_)) => {
            return Err(first_error.unwrap_or(Error::NonFinite("ELM search objective")));
        }
        Err(e) => return Err(e),
    };
    drop(objective);

    let start = round_candidate(&x0, &bounds);
    let (ni, nh) = round_candidate(&result.x, &bounds);
    let evaluations = visit_order.iter().map(|k| (k.0, k.1, cache[k])).collect();
    Ok(SearchOutcome {
        config: ElmConfig { n_input: ni, n_hidden: nh, ..base.clone() },
        objective: cache[&(ni, nh)],
        initial_objective: cache[&start],
        evaluations,
    })
}
