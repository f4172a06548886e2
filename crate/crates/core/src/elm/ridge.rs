//! Output-layer ridge solve.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::NormalEquations;

/// Diagonal floor used when a ridge parameter of zero is requested.
pub const LAMBDA_FLOOR: f64 = 1e-10;

fn effective_lambda(lambda: f64) -> Result<f64> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidConfig(format!("ridge lambda must be >= 0, got {lambda}")));
    }
    Ok(lambda.max(LAMBDA_FLOOR))
}

fn check(h: &DMatrix<f64>, y: &[f64]) -> Result<()> {
    if h.nrows() == 0 {
        return Err(Error::InsufficientData("ridge solve needs at least one row".into()));
    }
    if h.nrows() != y.len() {
        return Err(Error::LengthMismatch { expected: h.nrows(), actual: y.len() });
    }
    if h.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("ridge inputs"));
    }
    Ok(())
}

fn singular_hint(e: Error, lambda: f64) -> Error {
    match e {
        Error::Singular(msg) if lambda == 0.0 => {
            Error::Singular(format!("{msg}; use a positive ridge lambda"))
        }
        other => other,
    }
}

/// Solves `(HᵀH + λI) β = HᵀY`, penalizing every column.
pub fn fit_ridge(h: &DMatrix<f64>, y: &[f64], lambda: f64) -> Result<DVector<f64>> {
    check(h, y)?;
    let lam = effective_lambda(lambda)?;
    let mut ne = NormalEquations::new(h.ncols());
    ne.add_block(h, y);
    ne.solve(&vec![lam; h.ncols()]).map_err(|e| singular_hint(e, lambda))
}

/// Ridge solve with an appended constant column whose weight is not penalized.
///
/// Returns `(beta, bias)`.
pub fn fit_ridge_with_bias(h: &DMatrix<f64>, y: &[f64], lambda: f64) -> Result<(DVector<f64>, f64)> {
    check(h, y)?;
    let nh = h.ncols();
    let aug = h.clone().insert_column(nh, 1.0);
    let mut ne = NormalEquations::new(nh + 1);
    ne.add_block(&aug, y);
    solve_with_bias(&ne, lambda).map_err(|e| singular_hint(e, lambda))
}

/// Solves accumulated normal equations whose last column is the bias.
pub(crate) fn solve_with_bias(ne: &NormalEquations, lambda: f64) -> Result<(DVector<f64>, f64)> {
    let lam = effective_lambda(lambda)?;
    let nh = ne.dim() - 1;
    let mut penalty = vec![lam; nh + 1];
    penalty[nh] = 0.0;
    let sol = ne.solve(&penalty)?;
    let bias = sol[nh];
    Ok((sol.rows(0, nh).into_owned(), bias))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_design() {
        let h = DMatrix::identity(4, 4);
        let y = [1.0, -2.0, 3.5, 0.25];
        let b0 = fit_ridge(&h, &y, 0.0).unwrap();
        let b1 = fit_ridge(&h, &y, 1.0).unwrap();
        for i in 0..4 {
            assert!((b0[i] - y[i]).abs() < 1e-9);
            assert!((b1[i] - y[i] / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let h = DMatrix::from_element(3, 2, 1.0);
        assert!(matches!(fit_ridge(&h, &[1.0, f64::NAN, 0.0], 0.2), Err(Error::NonFinite(_))));
        assert!(fit_ridge(&h, &[1.0, 2.0], 0.2).is_err());
        assert!(fit_ridge(&h, &[1.0, 2.0, 3.0], -1.0).is_err());
    }

    #[test]
    fn zero_lambda_singularity_suggests_regularization() {
        let e = singular_hint(Error::Singular("matrix is not positive definite".into()), 0.0);
        assert!(e.to_string().contains("positive ridge lambda"));
        let e = singular_hint(Error::Singular("x".into()), 0.2);
        assert!(!e.to_string().contains("positive ridge lambda"));
    }

    #[test]
    fn bias_is_unpenalized() {
        // Constant target is absorbed entirely by the bias.
        let h = DMatrix::from_fn(20, 3, |i, j| ((i * 7 + j) % 5) as f64);
        let y = vec![42.0; 20];
        let (beta, bias) = fit_ridge_with_bias(&h, &y, 5.0).unwrap();
        assert!(beta.norm() < 1e-9);
        assert!((bias - 42.0).abs() < 1e-9);
    }
}
