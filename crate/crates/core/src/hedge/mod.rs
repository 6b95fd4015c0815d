//! Hedged combination weights.
//!
//! The feasible problem is
//!
//! ```text
//! minimize   (w'mu)^2 + w'Sigma w  =  w'Q w,   Q = Sigma + mu mu'
//! subject to sum(w) = 1,  ||w||_1 <= kappa
//! ```
//!
//! with `kappa` in `[1, inf]`. `kappa = 1` forbids negative weights;
//! `kappa = inf` drops the gross-exposure bound.

mod oracle;
mod solver;
mod winham;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::moments::MomentEstimates;
use crate::{Error, Result};

pub use oracle::oracle_weights_unconstrained;
pub use solver::{solve_hedged_weights, DEFAULT_MAX_ITER, DEFAULT_TOL, RIDGE};
pub use winham::{tree_prediction_errors, winham_weights, WinhamRule, TPE_FLOOR};

/// Gross-exposure bound on `||w||_1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kappa {
    Finite(f64),
    Unbounded,
}

impl Kappa {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_nan() || value < 1.0 {
            return Err(Error::invalid(format!("kappa must be >= 1, got {value}")));
        }
        Ok(if value.is_infinite() {
            Kappa::Unbounded
        } else {
            Kappa::Finite(value)
        })
    }

    pub fn value(self) -> f64 {
        match self {
            Kappa::Finite(k) => k,
            Kappa::Unbounded => f64::INFINITY,
        }
    }
}

impl fmt::Display for Kappa {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kappa::Finite(k) => write!(f, "{k}"),
            Kappa::Unbounded => f.write_str("inf"),
        }
    }
}

impl FromStr for Kappa {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "+inf" | "unbounded" => Ok(Kappa::Unbounded),
            other => {
                let v: f64 = other
                    .parse()
                    .map_err(|_| Error::invalid(format!("cannot parse kappa `{s}`")))?;
                Kappa::new(v)
            }
        }
    }
}

impl Serialize for Kappa {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Kappa::Finite(k) => s.serialize_f64(*k),
            Kappa::Unbounded => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Kappa {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        let k = match Raw::deserialize(d)? {
            Raw::Num(v) => Kappa::new(v),
            Raw::Text(s) => s.parse(),
        };
        k.map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HedgeProblem {
    pub mu_hat: DVector<f64>,
    pub sigma_hat: DMatrix<f64>,
    pub kappa: Kappa,
}

impl HedgeProblem {
    pub fn new(mu_hat: DVector<f64>, sigma_hat: DMatrix<f64>, kappa: Kappa) -> Result<Self> {
        let p = mu_hat.len();
        if p == 0 {
            return Err(Error::invalid("empty problem"));
        }
        if sigma_hat.shape() != (p, p) {
            return Err(Error::DimensionMismatch {
                expected: format!("{p} x {p} covariance"),
                found: format!("{} x {}", sigma_hat.nrows(), sigma_hat.ncols()),
            });
        }
        if mu_hat.iter().chain(sigma_hat.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite problem data"));
        }
        if let Kappa::Finite(k) = kappa {
            Kappa::new(k)?;
        }
        Ok(Self {
            mu_hat,
            sigma_hat,
            kappa,
        })
    }

    pub fn from_moments(m: &MomentEstimates, kappa: Kappa) -> Result<Self> {
        Self::new(m.mu_hat.clone(), m.sigma_hat.clone(), kappa)
    }

    pub fn p(&self) -> usize {
        self.mu_hat.len()
    }

    /// `(w'mu)^2 + w'Sigma w`.
    pub fn objective(&self, w: &[f64]) -> f64 {
        let w = DVector::from_column_slice(w);
        let m = w.dot(&self.mu_hat);
        m * m + w.dot(&(&self.sigma_hat * &w))
    }

    pub fn solve(&self) -> Result<WeightVector> {
        solve_hedged_weights(self, DEFAULT_TOL, DEFAULT_MAX_ITER)
    }
}

/// Combination weights and the objective value they attain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightVector {
    pub weights: Vec<f64>,
    pub kappa: Kappa,
    pub objective: f64,
    pub iterations: usize,
    /// The objective was identically zero; equal weights were returned.
    pub degenerate: bool,
}

impl WeightVector {
    pub fn equal(p: usize, kappa: Kappa) -> Self {
        Self {
            weights: vec![1.0 / p as f64; p],
            kappa,
            objective: 0.0,
            iterations: 0,
            degenerate: false,
        }
    }

    pub fn from_weights(weights: Vec<f64>, kappa: Kappa) -> Self {
        Self {
            weights,
            kappa,
            objective: f64::NAN,
            iterations: 0,
            degenerate: false,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn l1_norm(&self) -> f64 {
        self.weights.iter().map(|w| w.abs()).sum()
    }

    /// `index,weight` rows with a header line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "index,weight")?;
        for (j, w) in self.weights.iter().enumerate() {
            writeln!(out, "{j},{w}")?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("weights serialize")
    }
}

/// Row-wise `sum_j w_j * forecasts[i, j]`.
pub fn combine(weights: &WeightVector, method_forecasts: &DMatrix<f64>) -> Result<Vec<f64>> {
    if method_forecasts.ncols() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} forecast columns", weights.len()),
            found: method_forecasts.ncols().to_string(),
        });
    }
    let w = &weights.weights;
    if w.iter().all(|&v| v == w[0]) {
        // plain average, so equal weights reproduce a constant forecast exactly
        let p = w.len() as f64;
        return Ok(method_forecasts.row_iter().map(|r| r.sum() * (w[0] * p) / p).collect());
    }
    let w = DVector::from_column_slice(w);
    Ok((method_forecasts * w).as_slice().to_vec())
}
