//! Mean and covariance estimates of the forecast-error vector.
//!
//! Every covariance estimator here uses the `1/n` divisor on column-demeaned
//! residuals. Any common scale factor is irrelevant to the weight solver.

mod linear;
mod qis;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::forest::ResidualMatrix;
use crate::{Error, Result};

pub use linear::{linear_shrinkage, linear_shrinkage_intensity, linear_shrinkage_with_intensity};
pub use qis::{nonlinear_shrinkage_qis, qis_eigenvalues, QIS_MIN_ROWS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Sample,
    LinearShrinkage,
    NonlinearShrinkage,
}

impl Estimator {
    pub fn as_str(self) -> &'static str {
        match self {
            Estimator::Sample => "sample",
            Estimator::LinearShrinkage => "linear_shrinkage",
            Estimator::NonlinearShrinkage => "nonlinear_shrinkage",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sample" => Ok(Estimator::Sample),
            "linear" | "linear_shrinkage" => Ok(Estimator::LinearShrinkage),
            "nonlinear" | "nonlinear_shrinkage" | "qis" => Ok(Estimator::NonlinearShrinkage),
            other => Err(Error::invalid(format!(
                "unknown estimator `{other}` (expected sample, linear_shrinkage or nonlinear_shrinkage)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentEstimates {
    pub mu_hat: DVector<f64>,
    pub sigma_hat: DMatrix<f64>,
    pub estimator: Estimator,
}

impl MomentEstimates {
    /// `{"estimator": .., "mu_hat": [..], "sigma_hat": [[row], ..]}`.
    pub fn to_json(&self) -> String {
        let rows: Vec<Vec<f64>> = self
            .sigma_hat
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect();
        serde_json::json!({
            "estimator": self.estimator,
            "mu_hat": self.mu_hat.as_slice(),
            "sigma_hat": rows,
        })
        .to_string()
    }
}

/// Column means of the residual matrix.
pub fn mean_estimate(r: &ResidualMatrix) -> Result<DVector<f64>> {
    if r.n() == 0 || r.p() == 0 {
        return Err(Error::invalid("residual matrix is empty"));
    }
    let n = r.n() as f64;
    Ok(DVector::from_iterator(
        r.p(),
        r.values.column_iter().map(|c| c.sum() / n),
    ))
}

fn centered(r: &ResidualMatrix, mu: &DVector<f64>) -> DMatrix<f64> {
    let mut x = r.values.clone();
    for (j, mut col) in x.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mu[j]);
    }
    x
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let p = m.nrows();
    for i in 0..p {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// `S = (1/n) (R - 1 mu')' (R - 1 mu')`.
pub fn sample_covariance(r: &ResidualMatrix) -> Result<DMatrix<f64>> {
    if r.n() < 2 {
        return Err(Error::invalid(format!("sample covariance needs n >= 2, found {}", r.n())));
    }
    let mu = mean_estimate(r)?;
    Ok(covariance_of_centered(&centered(r, &mu)))
}

fn covariance_of_centered(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut s = x.tr_mul(x) / x.nrows() as f64;
    symmetrize(&mut s);
    s
}

pub fn estimate_moments(r: &ResidualMatrix, estimator: Estimator) -> Result<MomentEstimates> {
    let mu_hat = mean_estimate(r)?;
    let sigma_hat = match estimator {
        Estimator::Sample => sample_covariance(r)?,
        Estimator::LinearShrinkage => linear_shrinkage(r)?,
        Estimator::NonlinearShrinkage => nonlinear_shrinkage_qis(r)?,
    };
    Ok(MomentEstimates {
        mu_hat,
        sigma_hat,
        estimator,
    })
}

/// Largest asymmetry and smallest eigenvalue relative to the largest
/// absolute eigenvalue. Diagnostic only; uses a full eigendecomposition.
pub fn psd_diagnostics(m: &DMatrix<f64>) -> (f64, f64) {
    let asym = m
        .iter()
        .zip(m.transpose().iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let eig = m.clone().symmetric_eigenvalues();
    let max_abs = eig.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let rel_min = if max_abs > 0.0 { min / max_abs } else { 0.0 };
    (asym, rel_min)
}
