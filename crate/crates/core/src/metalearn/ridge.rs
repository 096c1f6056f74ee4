use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Ridge regression on standardized inputs with an unpenalized intercept.
///
/// Minimizes `||y - b0 - Zb||² + lambda ||b||²`; solved on centered targets
/// through the Cholesky factor of `ZᵀZ + lambda I`.
pub(super) fn fit(z: &[Vec<f64>], y: &[f64], lambda: f64) -> Result<(f64, Vec<f64>)> {
    let n = z.len();
    let d = z.first().map_or(0, Vec::len);
    let y_mean = y.iter().sum::<f64>() / n as f64;
    if d == 0 {
        return Ok((y_mean, Vec::new()));
    }
    let x = DMatrix::from_fn(n, d, |i, j| z[i][j]);
    let yc = DVector::from_fn(n, |i, _| y[i] - y_mean);
    let mut gram = x.transpose() * &x;
    for j in 0..d {
        gram[(j, j)] += lambda;
    }
    let rhs = x.transpose() * yc;
    let beta = gram
        .clone()
        .cholesky()
        .map(|c| c.solve(&rhs))
        .or_else(|| gram.lu().solve(&rhs))
        .ok_or_else(|| Error::InsufficientData("ridge normal equations are singular".into()))?;
    // inputs are centered by standardization, so the intercept is the target mean
    Ok((y_mean, beta.iter().copied().collect()))
}
