use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Kappa, WeightVector};
use crate::forest::ResidualMatrix;
use crate::{Error, Result};

/// A zero tree error is raised to this fraction of the largest tree error
/// before inversion, so a perfect tree gets (nearly) all the weight instead
/// of dividing by zero.
pub const TPE_FLOOR: f64 = 1e-12;

/// Relative-weight rule applied to each tree's OOB error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WinhamRule {
    /// `1 - tPE`
    OneMinus,
    /// `exp(1 / tPE)`
    ExpInverse,
    /// `(1 / tPE)^lambda`
    Power,
}

impl WinhamRule {
    pub fn as_str(self) -> &'static str {
        match self {
            WinhamRule::OneMinus => "one_minus",
            WinhamRule::ExpInverse => "exp_inverse",
            WinhamRule::Power => "power",
        }
    }
}

impl fmt::Display for WinhamRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for WinhamRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "one_minus" => Ok(WinhamRule::OneMinus),
            "exp_inverse" | "exp" => Ok(WinhamRule::ExpInverse),
            "power" => Ok(WinhamRule::Power),
            other => Err(Error::invalid(format!("unknown weighting rule `{other}`"))),
        }
    }
}

/// Mean absolute out-of-bag error of each tree.
pub fn tree_prediction_errors(r: &ResidualMatrix) -> Result<Vec<f64>> {
    let mask = r
        .oob_mask
        .as_ref()
        .ok_or_else(|| Error::invalid("residual matrix has no out-of-bag mask"))?;
    if mask.shape() != r.values.shape() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} x {} mask", r.n(), r.p()),
            found: format!("{} x {}", mask.nrows(), mask.ncols()),
        });
    }
    (0..r.p())
        .map(|j| {
            let (sum, count) = r
                .values
                .column(j)
                .iter()
                .zip(mask.column(j).iter())
                .filter(|(_, &oob)| oob)
                .fold((0.0, 0usize), |(s, c), (v, _)| (s + v.abs(), c + 1));
            if count == 0 {
                Err(Error::invalid(format!("tree {j} has no out-of-bag rows")))
            } else {
                Ok(sum / count as f64)
            }
        })
        .collect()
}

/// Per-tree weights from OOB accuracy, normalized to sum to one.
/// `lambda` is only used by [`WinhamRule::Power`].
pub fn winham_weights(r: &ResidualMatrix, rule: WinhamRule, lambda: f64) -> Result<WeightVector> {
    let tpe = tree_prediction_errors(r)?;
    weights_from_errors(&tpe, rule, lambda)
}

pub(crate) fn weights_from_errors(tpe: &[f64], rule: WinhamRule, lambda: f64) -> Result<WeightVector> {
    let p = tpe.len();
    if p == 0 {
        return Err(Error::invalid("no trees"));
    }
    if tpe.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(Error::invalid("tree errors must be finite and nonnegative"));
    }
    if rule == WinhamRule::Power && !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("power rule needs lambda > 0, got {lambda}")));
    }
    let weights = match rule {
        WinhamRule::OneMinus => {
            if let Some(j) = tpe.iter().position(|&t| t >= 1.0) {
                return Err(Error::invalid(format!(
                    "tree {j} has error {} >= 1; the one_minus rule would give a nonpositive weight",
                    tpe[j]
                )));
            }
            let rel: Vec<f64> = tpe.iter().map(|t| 1.0 - t).collect();
            let total: f64 = rel.iter().sum();
            rel.into_iter().map(|v| v / total).collect()
        }
        WinhamRule::ExpInverse | WinhamRule::Power => {
            let tmax = tpe.iter().fold(0.0f64, |m, &t| m.max(t));
            if tmax == 0.0 {
                return Ok(WeightVector::from_weights(vec![1.0 / p as f64; p], Kappa::Finite(1.0)));
            }
            let floor = TPE_FLOOR * tmax;
            let log_rel: Vec<f64> = tpe
                .iter()
                .map(|&t| {
                    let t = t.max(floor);
                    match rule {
                        WinhamRule::ExpInverse => 1.0 / t,
                        _ => -lambda * t.ln(),
                    }
                })
                .collect();
            softmax(&log_rel)
        }
    };
    Ok(WeightVector::from_weights(weights, Kappa::Finite(1.0)))
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let e: Vec<f64> = logits.iter().map(|&l| (l - m).exp()).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|v| v / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() < tol)
    }

    #[test]
    fn exp_inverse_example() {
        let w = weights_from_errors(&[0.5, 1.0], WinhamRule::ExpInverse, 0.0).unwrap();
        let e = std::f64::consts::E;
        let a = e * e / (e * e + e);
        assert!(close(&w.weights, &[a, 1.0 - a], 1e-14));
        assert!(close(&w.weights, &[0.7311, 0.2689], 1e-4));
    }

    #[test]
    fn power_example() {
        let w = weights_from_errors(&[0.5, 1.0], WinhamRule::Power, 5.0).unwrap();
        assert!(close(&w.weights, &[32.0 / 33.0, 1.0 / 33.0], 1e-14));
    }

    #[test]
    fn equal_errors_give_equal_weights() {
        for rule in [WinhamRule::OneMinus, WinhamRule::ExpInverse, WinhamRule::Power] {
            let w = weights_from_errors(&[0.3; 4], rule, 2.0).unwrap();
            assert!(close(&w.weights, &[0.25; 4], 1e-15), "{rule}");
        }
    }

    #[test]
    fn one_minus_rejects_large_errors() {
        assert!(weights_from_errors(&[0.5, 1.0], WinhamRule::OneMinus, 0.0).is_err());
        let w = weights_from_errors(&[0.2, 0.6], WinhamRule::OneMinus, 0.0).unwrap();
        assert!(close(&w.weights, &[2.0 / 3.0, 1.0 / 3.0], 1e-15));
    }

    #[test]
    fn zero_error_tree_takes_the_weight() {
        let w = weights_from_errors(&[0.0, 0.5, 0.5], WinhamRule::Power, 1.0).unwrap();
        assert!(w.weights[0] > 1.0 - 1e-9);
        let w = weights_from_errors(&[0.0, 0.0], WinhamRule::ExpInverse, 0.0).unwrap();
        assert_eq!(w.weights, vec![0.5, 0.5]);
    }

    #[test]
    fn exp_inverse_survives_tiny_errors() {
        let w = weights_from_errors(&[1e-4, 2e-4], WinhamRule::ExpInverse, 0.0).unwrap();
        assert!(w.weights.iter().all(|v| v.is_finite()));
        assert!((w.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn errors_use_oob_rows_only() {
        let values = DMatrix::from_row_slice(3, 2, &[1.0, -2.0, 3.0, 4.0, -5.0, 6.0]);
        let mask = DMatrix::from_row_slice(3, 2, &[true, false, false, true, true, true]);
        let r = ResidualMatrix { values, oob_mask: Some(mask) };
        assert_eq!(tree_prediction_errors(&r).unwrap(), vec![3.0, 5.0]);
        let no_oob = ResidualMatrix {
            values: DMatrix::zeros(2, 1),
            oob_mask: Some(DMatrix::from_element(2, 1, false)),
        };
        assert!(tree_prediction_errors(&no_oob).is_err());
    }

    #[test]
    fn power_needs_positive_lambda() {
        assert!(weights_from_errors(&[0.5, 1.0], WinhamRule::Power, 0.0).is_err());
    }
}
