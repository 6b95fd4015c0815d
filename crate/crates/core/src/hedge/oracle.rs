use nalgebra::{DMatrix, DVector};

use super::{Kappa, WeightVector};
use crate::{Error, Result};

/// Closed-form minimizer of `(w'mu)^2 + w'Sigma w` subject only to
/// `sum(w) = 1`: `w = Q^{-1} 1 / (1' Q^{-1} 1)` with `Q = Sigma + mu mu'`.
pub fn oracle_weights_unconstrained(mu: &DVector<f64>, sigma: &DMatrix<f64>) -> Result<WeightVector> {
    let p = mu.len();
    if sigma.shape() != (p, p) || p == 0 {
        return Err(Error::DimensionMismatch {
            expected: format!("{p} x {p} covariance"),
            found: format!("{} x {}", sigma.nrows(), sigma.ncols()),
        });
    }
    let q = sigma + mu * mu.transpose();
    let q_inv_one = q
        .lu()
        .solve(&DVector::from_element(p, 1.0))
        .ok_or_else(|| Error::Singular("Q = Sigma + mu mu' is singular".into()))?;
    let denom = q_inv_one.sum();
    if !denom.is_finite() || denom.abs() < f64::EPSILON {
        return Err(Error::Singular("1' Q^{-1} 1 vanishes".into()));
    }
    let w = q_inv_one / denom;
    let m = w.dot(mu);
    let objective = m * m + w.dot(&(sigma * &w));
    Ok(WeightVector {
        weights: w.as_slice().to_vec(),
        kappa: Kappa::Unbounded,
        objective,
        iterations: 0,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_gives_equal_weights() {
        let w = oracle_weights_unconstrained(&DVector::zeros(4), &DMatrix::identity(4, 4)).unwrap();
        assert!(w.weights.iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn diagonal_example() {
        let s = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0]));
        let w = oracle_weights_unconstrained(&DVector::zeros(2), &s).unwrap();
        assert!((w.weights[0] - 0.8).abs() < 1e-15 && (w.weights[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn mean_shifts_weight() {
        let mu = DVector::from_vec(vec![1.0, 0.0]);
        let w = oracle_weights_unconstrained(&mu, &DMatrix::identity(2, 2)).unwrap();
        assert!((w.weights[0] - 1.0 / 3.0).abs() < 1e-15 && (w.weights[1] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn singular_q() {
        assert!(oracle_weights_unconstrained(&DVector::zeros(2), &DMatrix::zeros(2, 2)).is_err());
    }
}
