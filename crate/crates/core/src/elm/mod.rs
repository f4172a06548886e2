//! Extreme Learning Machine forecaster.
//!
//! A single hidden layer with frozen random weights drawn from U(-1, 1) and a
//! mix of sigmoid and Gaussian neurons. Only the output layer is learned, by a
//! ridge solve over the hidden activations. Several random initializations are
//! trained and the one with the lowest validation nRMSE is kept.

mod nelder_mead;
mod ridge;
mod search;

pub use nelder_mead::{nelder_mead, NelderMeadOptions, NelderMeadResult};
pub use ridge::{fit_ridge, fit_ridge_with_bias, LAMBDA_FLOOR};
pub use search::{optimize_config, optimize_config_masked, round_candidate, SearchBounds, SearchOutcome, SearchSettings};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::NormalEquations;
use crate::metrics;
use crate::timeseries::SupervisedSet;

/// Rows per block when streaming the hidden layer.
const BLOCK_ROWS: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ElmConfig {
    pub n_input: usize,
    pub n_hidden: usize,
    /// Fraction of hidden neurons that are sigmoid; the rest are Gaussian.
    pub activation_threshold: f64,
    pub ridge_lambda: f64,
    pub gaussian_sigma: f64,
    pub n_runs: usize,
    pub seed: u64,
}

impl Default for ElmConfig {
    fn default() -> Self {
        Self {
            n_input: 48,
            n_hidden: 192,
            activation_threshold: 0.6,
            ridge_lambda: 0.2,
            gaussian_sigma: 1.0,
            n_runs: 96,
            seed: 0,
        }
    }
}

impl ElmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_input == 0 || self.n_hidden == 0 {
            return Err(Error::InvalidConfig("n_input and n_hidden must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.activation_threshold) {
            return Err(Error::InvalidConfig("activation_threshold must be in [0, 1]".into()));
        }
        if !(self.ridge_lambda >= 0.0) {
            return Err(Error::InvalidConfig("ridge_lambda must be >= 0".into()));
        }
        if !(self.gaussian_sigma > 0.0) {
            return Err(Error::InvalidConfig("gaussian_sigma must be > 0".into()));
        }
        if self.n_runs == 0 {
            return Err(Error::InvalidConfig("n_runs must be >= 1".into()));
        }
        Ok(())
    }

    pub fn n_sigmoid(&self) -> usize {
        (self.activation_threshold * self.n_hidden as f64).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Sigmoid,
    Gaussian,
}

/// Per-feature standardization `(x - mean) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputScaling {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl InputScaling {
    pub fn identity(n: usize) -> Self {
        Self { mean: vec![0.0; n], scale: vec![1.0; n] }
    }

    pub fn fit(x: &DMatrix<f64>) -> Self {
        let n = x.nrows().max(1) as f64;
        let mut mean = Vec::with_capacity(x.ncols());
        let mut scale = Vec::with_capacity(x.ncols());
        for col in x.column_iter() {
            let m = col.sum() / n;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            let s = var.sqrt();
            mean.push(m);
            scale.push(if s > 1e-12 { s } else { 1.0 });
        }
        Self { mean, scale }
    }

    fn apply(&self, x: &mut DMatrix<f64>) {
        for (j, mut col) in x.column_iter_mut().enumerate() {
            let (m, s) = (self.mean[j], self.scale[j]);
            col.iter_mut().for_each(|v| *v = (*v - m) / s);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElmModel {
    pub config: ElmConfig,
    pub run_seed: u64,
    /// `n_hidden × n_input`.
    pub weights: DMatrix<f64>,
    pub biases: Vec<f64>,
    pub activations: Vec<Activation>,
    pub beta: Vec<f64>,
    pub output_bias: f64,
    pub input_scaling: InputScaling,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCount {
    pub frozen: usize,
    pub trained: usize,
    pub total: usize,
}

/// Frozen `(n_input + 1) · n_hidden` plus trained `n_hidden + 1`.
pub fn param_count(config: &ElmConfig) -> ParamCount {
    let frozen = (config.n_input + 1) * config.n_hidden;
    let trained = config.n_hidden + 1;
    ParamCount { frozen, trained, total: frozen + trained }
}

/// Architecture with a separately published parameter total that disagrees
/// with the counting formula.
pub const PUBLISHED_ARCHITECTURE: (usize, usize) = (78, 472);
pub const PUBLISHED_TOTAL: usize = 37_401;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamAudit {
    pub n_input: usize,
    pub n_hidden: usize,
    pub count: ParamCount,
    pub published_total: Option<usize>,
    pub discrepancy: Option<String>,
}

/// Parameter count, flagged when it contradicts the published total for the
/// same architecture.
pub fn param_audit(n_input: usize, n_hidden: usize) -> ParamAudit {
    let count = param_count(&ElmConfig { n_input, n_hidden, ..Default::default() });
    let published_total = ((n_input, n_hidden) == PUBLISHED_ARCHITECTURE).then_some(PUBLISHED_TOTAL);
    let discrepancy = published_total.filter(|&p| p != count.total).map(|p| {
        format!(
            "formula (n_input + 1) * n_hidden + (n_hidden + 1) gives {} for ({n_input}, {n_hidden}); \
             the published total {p} is inconsistent with it",
            count.total
        )
    });
    ParamAudit { n_input, n_hidden, count, published_total, discrepancy }
}

fn run_rng(seed: u64, run_seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run_seed);
    rng
}

/// Untrained network with U(-1, 1) weights and biases.
pub fn init_random(config: &ElmConfig, run_seed: u64) -> Result<ElmModel> {
    config.validate()?;
    let mut rng = run_rng(config.seed, run_seed);
    let (ni, nh) = (config.n_input, config.n_hidden);
    let mut w = Vec::with_capacity(ni * nh);
    for _ in 0..ni * nh {
        w.push(rng.random_range(-1.0..=1.0));
    }
    let weights = DMatrix::from_row_slice(nh, ni, &w);
    let biases = (0..nh).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let n_sig = config.n_sigmoid();
    let activations = (0..nh)
        .map(|j| if j < n_sig { Activation::Sigmoid } else { Activation::Gaussian })
        .collect();
    Ok(ElmModel {
        config: config.clone(),
        run_seed,
        weights,
        biases,
        activations,
        beta: vec![0.0; nh],
        output_bias: 0.0,
        input_scaling: InputScaling::identity(ni),
    })
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl ElmModel {
    fn check_dims(&self, x: &DMatrix<f64>) -> Result<()> {
        if x.ncols() != self.config.n_input {
            return Err(Error::DimensionMismatch { expected: self.config.n_input, actual: x.ncols() });
        }
        Ok(())
    }

    /// Hidden activations of raw (unscaled) inputs, optionally with a trailing
    /// constant column.
    fn hidden_block(&self, x: &DMatrix<f64>, bias_column: bool) -> DMatrix<f64> {
        let mut xs = x.clone();
        self.input_scaling.apply(&mut xs);
        let mut z = xs * self.weights.transpose();
        let two_var = 2.0 * self.config.gaussian_sigma * self.config.gaussian_sigma;
        for (j, mut col) in z.column_iter_mut().enumerate() {
            let b = self.biases[j];
            match self.activations[j] {
                Activation::Sigmoid => col.iter_mut().for_each(|v| *v = sigmoid(*v + b)),
                Activation::Gaussian => col.iter_mut().for_each(|v| {
                    let a = *v + b;
                    *v = (-a * a / two_var).exp()
                }),
            }
        }
        if bias_column {
            let nh = z.ncols();
            z.insert_column(nh, 1.0)
        } else {
            z
        }
    }

    /// Raw network output `H·β + bias`, unclamped.
    fn output_raw(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let mut out = Vec::with_capacity(x.nrows());
        let beta = nalgebra::DVector::from_column_slice(&self.beta);
        let mut r0 = 0;
        while r0 < x.nrows() {
            let len = BLOCK_ROWS.min(x.nrows() - r0);
            let h = self.hidden_block(&x.rows(r0, len).into_owned(), false);
            let y = h * &beta;
            out.extend(y.iter().map(|v| v + self.output_bias));
            r0 += len;
        }
        out
    }
}

/// Hidden-layer matrix `H` for inputs `x` (raw units; the model's scaling is applied).
pub fn hidden_activations(model: &ElmModel, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    model.check_dims(x)?;
    Ok(model.hidden_block(x, false))
}

/// Forecasts, clamped at zero.
pub fn predict(model: &ElmModel, x: &DMatrix<f64>) -> Result<Vec<f64>> {
    model.check_dims(x)?;
    Ok(model.output_raw(x).into_iter().map(|v| v.max(0.0)).collect())
}

/// Fits scaling and output weights for one random initialization.
pub fn train_run(train: &SupervisedSet, config: &ElmConfig, run_seed: u64) -> Result<ElmModel> {
    let mut model = init_random(config, run_seed)?;
    model.check_dims(&train.inputs)?;
    if train.is_empty() {
        return Err(Error::InsufficientData("empty training set".into()));
    }
    if train.inputs.iter().chain(&train.targets).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("ELM training data"));
    }
    model.input_scaling = InputScaling::fit(&train.inputs);

    let nh = config.n_hidden;
    let mut ne = NormalEquations::new(nh + 1);
    let mut r0 = 0;
    while r0 < train.len() {
        let len = BLOCK_ROWS.min(train.len() - r0);
        let h = model.hidden_block(&train.inputs.rows(r0, len).into_owned(), true);
        ne.add_block(&h, &train.targets[r0..r0 + len]);
        r0 += len;
    }
    let (beta, bias) = ridge::solve_with_bias(&ne, config.ridge_lambda)?;
    model.beta = beta.iter().copied().collect();
    model.output_bias = bias;
    Ok(model)
}

/// nRMSE of clamped forecasts over every row of `set`.
pub fn validation_nrmse(model: &ElmModel, set: &SupervisedSet) -> Result<f64> {
    let pred = predict(model, &set.inputs)?;
    metrics::nrmse(&set.targets, &pred, None)
}

/// Index of the smallest finite score; the first one wins ties.
pub fn pick_winner(scores: &[f64]) -> Result<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        if s.is_finite() && best.is_none_or(|b| s < scores[b]) {
            best = Some(i);
        }
    }
    best.ok_or(Error::AllRunsFailed)
}

#[derive(Debug, Clone)]
pub struct WinnerTakesAll {
    pub model: ElmModel,
    /// Validation nRMSE of each run, `NaN` for runs that failed.
    pub run_scores: Vec<f64>,
    pub winner: usize,
}

impl WinnerTakesAll {
    pub fn winner_score(&self) -> f64 {
        self.run_scores[self.winner]
    }
}

/// Trains `n_runs` initializations and keeps the best on validation nRMSE.
pub fn train_winner_takes_all(
    train: &SupervisedSet,
    valid: &SupervisedSet,
    config: &ElmConfig,
) -> Result<WinnerTakesAll> {
    config.validate()?;
    let mut best: Option<(ElmModel, f64)> = None;
    let mut scores = Vec::with_capacity(config.n_runs);
    for run in 0..config.n_runs as u64 {
        let score = match train_run(train, config, run) {
            Ok(model) => {
                let s = validation_nrmse(&model, valid).unwrap_or(f64::NAN);
                if s.is_finite() && best.as_ref().is_none_or(|(_, b)| s < *b) {
                    best = Some((model, s));
                }
                s
            }
            Err(Error::Singular(_)) | Err(Error::NonFinite(_)) => f64::NAN,
            Err(e) => return Err(e),
        };
        scores.push(score);
    }
    let winner = pick_winner(&scores)?;
    let (model, _) = best.ok_or(Error::AllRunsFailed)?;
    debug_assert_eq!(model.run_seed, winner as u64);
    Ok(WinnerTakesAll { model, run_scores: scores, winner })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_model(n_hidden: usize, threshold: f64) -> ElmModel {
        let cfg = ElmConfig { n_input: 2, n_hidden, activation_threshold: threshold, ..Default::default() };
        let mut m = init_random(&cfg, 0).unwrap();
        m.weights.fill(0.0);
        m.biases.iter_mut().for_each(|b| *b = 0.0);
        m
    }

    #[test]
    fn activation_split_counts() {
        let cfg = ElmConfig { n_input: 78, n_hidden: 472, ..Default::default() };
        let m = init_random(&cfg, 3).unwrap();
        let sig = m.activations.iter().filter(|a| **a == Activation::Sigmoid).count();
        assert_eq!(sig, 283);
        assert_eq!(m.activations.len() - sig, 189);
        let all = init_random(&ElmConfig { activation_threshold: 1.0, ..cfg }, 3).unwrap();
        assert!(all.activations.iter().all(|a| *a == Activation::Sigmoid));
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let cfg = ElmConfig { n_input: 5, n_hidden: 20, seed: 9, ..Default::default() };
        let a = init_random(&cfg, 4).unwrap();
        let b = init_random(&cfg, 4).unwrap();
        let c = init_random(&cfg, 5).unwrap();
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.biases, b.biases);
        assert_ne!(a.weights, c.weights);
        assert!(a.weights.iter().chain(&a.biases).all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn activations_at_zero() {
        let m = zero_model(10, 0.5);
        let h = hidden_activations(&m, &DMatrix::zeros(1, 2)).unwrap();
        for j in 0..5 {
            assert_eq!(h[(0, j)], 0.5);
        }
        for j in 5..10 {
            assert_eq!(h[(0, j)], 1.0);
        }
        assert!((sigmoid(1.0) - 0.7310585786).abs() < 1e-9);
        assert!(hidden_activations(&m, &DMatrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn predictions_are_clamped() {
        let mut m = zero_model(4, 1.0);
        m.output_bias = -12.0;
        let p = predict(&m, &DMatrix::zeros(3, 2)).unwrap();
        assert_eq!(p, vec![0.0; 3]);
    }

    #[test]
    fn param_counts() {
        let pc = param_count(&ElmConfig { n_input: 78, n_hidden: 472, ..Default::default() });
        assert_eq!(pc, ParamCount { frozen: 37_288, trained: 473, total: 37_761 });
        let pc = param_count(&ElmConfig { n_input: 1, n_hidden: 1, ..Default::default() });
        assert_eq!(pc.total, 4);
        for nh in [1, 7, 300] {
            let pc = param_count(&ElmConfig { n_input: 3, n_hidden: nh, ..Default::default() });
            assert_eq!(pc.trained, nh + 1);
            assert_eq!(pc.total, pc.frozen + pc.trained);
        }
        let audit = param_audit(78, 472);
        assert_eq!(audit.published_total, Some(37_401));
        assert!(audit.discrepancy.is_some());
        assert!(param_audit(10, 40).discrepancy.is_none());
    }

    #[test]
    fn pick_winner_argmin() {
        assert_eq!(pick_winner(&[0.3, 0.1, 0.1, f64::NAN]).unwrap(), 1);
        assert_eq!(pick_winner(&[f64::NAN, 0.5]).unwrap(), 1);
        assert!(matches!(pick_winner(&[f64::NAN]), Err(Error::AllRunsFailed)));
    }
}
