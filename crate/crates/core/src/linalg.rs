//! Small dense helpers shared by the estimators and bounds.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Condition numbers above this are reported as ill-conditioned.
pub const ILL_CONDITIONED: f64 = 1e12;

/// Relative eigenvalue floor below which a symmetric denominator is singular.
const SINGULAR_RELATIVE: f64 = 1e-13;

/// Inverse of a symmetric positive definite matrix plus its 2-norm condition number.
#[derive(Debug, Clone)]
pub struct SymmetricInverse {
    pub inverse: DMatrix<f64>,
    pub condition: f64,
}

pub fn symmetric_inverse(a: &DMatrix<f64>, what: &str) -> Result<SymmetricInverse> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("denominator matrix"));
    }
    let eig = a.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    if max == 0.0 || min <= SINGULAR_RELATIVE * max {
        return Err(Error::EstimationInfeasible(format!("{what} is singular")));
    }
    let condition = max / min;
    let inverse = match a.clone().cholesky() {
        Some(ch) => ch.inverse(),
        None => {
            return Err(Error::EstimationInfeasible(format!(
                "{what} is not positive definite"
            )))
        }
    };
    Ok(SymmetricInverse { inverse, condition })
}

/// `z' m z`.
pub fn quad_form(z: &DVector<f64>, m: &DMatrix<f64>) -> f64 {
    (z.transpose() * m * z)[(0, 0)]
}

/// Pairwise (cascade) summation: fixed reduction tree, independent of threading.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if values.len() <= LEAF {
        return values.iter().fold(0.0, |acc, v| acc + v);
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Largest absolute entry of `a - a'`.
pub fn asymmetry(a: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..a.nrows() {
        for j in (i + 1)..a.ncols() {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}
