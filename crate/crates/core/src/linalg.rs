//! Normal-equation accumulation and symmetric positive-definite solves.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Accumulates `XᵀX` and `Xᵀy` block by block so the full design matrix
/// never has to be held in memory.
#[derive(Debug, Clone)]
pub struct NormalEquations {
    pub gram: DMatrix<f64>,
    pub rhs: DVector<f64>,
    pub n_rows: usize,
}

impl NormalEquations {
    pub fn new(dim: usize) -> Self {
        Self {
            gram: DMatrix::zeros(dim, dim),
            rhs: DVector::zeros(dim),
            n_rows: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.rhs.len()
    }

    pub fn add_block(&mut self, x: &DMatrix<f64>, y: &[f64]) {
        debug_assert_eq!(x.ncols(), self.dim());
        debug_assert_eq!(x.nrows(), y.len());
        let xt = x.transpose();
        self.gram.gemm(1.0, &xt, x, 1.0);
        let yv = DVector::from_column_slice(y);
        self.rhs.gemv(1.0, &xt, &yv, 1.0);
        self.n_rows += y.len();
    }

    /// Solves `(XᵀX + diag(penalty)) β = Xᵀy`.
    pub fn solve(&self, penalty: &[f64]) -> Result<DVector<f64>> {
        let mut a = self.gram.clone();
        for (i, &p) in penalty.iter().enumerate() {
            a[(i, i)] += p;
        }
        solve_spd(&a, &self.rhs)
    }
}

/// Cholesky solve with one step of iterative refinement.
pub fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("linear system"));
    }
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("matrix is not positive definite".into()))?;
    let mut x = chol.solve(b);
    let r = b - a * &x;
    x += chol.solve(&r);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("solution is not finite".into()));
    }
    Ok(x)
}

/// Least squares with an unpenalized intercept, solved on centered data.
///
/// Returns `(intercept, coefficients)`. `jitter` is added to the diagonal of
/// the centered Gram matrix.
pub fn centered_least_squares(
    x: &DMatrix<f64>,
    y: &[f64],
    jitter: f64,
) -> Result<(f64, DVector<f64>)> {
    let n = x.nrows();
    let p = x.ncols();
    if n == 0 {
        return Err(Error::InsufficientData("no rows".into()));
    }
    let col_means: Vec<f64> = (0..p).map(|j| x.column(j).sum() / n as f64).collect();
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let xc = DMatrix::from_fn(n, p, |i, j| x[(i, j)] - col_means[j]);
    let yc: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
    let mut ne = NormalEquations::new(p);
    ne.add_block(&xc, &yc);
    let phi = ne.solve(&vec![jitter; p])?;
    let intercept = y_mean - phi.iter().zip(&col_means).map(|(a, b)| a * b).sum::<f64>();
    Ok((intercept, phi))
}
