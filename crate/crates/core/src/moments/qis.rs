//! Quadratic-inverse nonlinear shrinkage.
//!
//! Keeps the sample eigenvectors and replaces each sample eigenvalue by a
//! shrunk value obtained from a kernel-smoothed Stein shrinker applied to
//! the inverse eigenvalues (bandwidth `h = min(c^2, 1/c^2)^0.35 / p^0.35`,
//! concentration `c = p / (n - 1)` after demeaning). When `p > n - 1` the
//! null eigenvalues share a single value. Shrunk eigenvalues are rescaled
//! to preserve the trace.

use nalgebra::{DMatrix, SymmetricEigen};

use super::sample_covariance;
use crate::forest::ResidualMatrix;
use crate::{Error, Result};

/// Minimum number of observations accepted by the estimator.
pub const QIS_MIN_ROWS: usize = 12;

/// Eigenvalues below this fraction of the largest are treated as this floor
/// before inversion.
const EIGEN_FLOOR: f64 = 1e-14;

pub fn nonlinear_shrinkage_qis(r: &ResidualMatrix) -> Result<DMatrix<f64>> {
    let (n_obs, p) = (r.n(), r.p());
    if n_obs < QIS_MIN_ROWS {
        return Err(Error::invalid(format!(
            "nonlinear shrinkage needs at least {QIS_MIN_ROWS} rows, found {n_obs}"
        )));
    }
    if p < 2 {
        return Err(Error::invalid("nonlinear shrinkage needs at least 2 columns"));
    }
    if r.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("residual matrix contains non-finite values"));
    }
    let s = sample_covariance(r)?;
    if s.iter().all(|&v| v == 0.0) {
        return Ok(s);
    }

    let eig = SymmetricEigen::new(s);
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let lambda: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k].max(0.0)).collect();
    let u = eig.eigenvectors.select_columns(&order);

    let delta = qis_eigenvalues(&lambda, n_obs - 1);

    // U diag(delta) U'
    let mut scaled = u.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= delta[j];
    }
    let mut out = scaled * u.transpose();
    for i in 0..p {
        for j in 0..i {
            let v = 0.5 * (out[(i, j)] + out[(j, i)]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    Ok(out)
}

/// Shrunk eigenvalues for sample eigenvalues sorted ascending, with `n` the
/// effective sample size. The result is nonnegative, nondecreasing and has
/// the same sum as the input.
pub fn qis_eigenvalues(lambda: &[f64], n: usize) -> Vec<f64> {
    let p = lambda.len();
    let total: f64 = lambda.iter().sum();
    if p == 0 || total <= 0.0 {
        return vec![0.0; p];
    }
    let c = p as f64 / n as f64;
    let h = (c * c).min(1.0 / (c * c)).powf(0.35) / (p as f64).powf(0.35);
    let m = p.min(n);
    let floor = EIGEN_FLOOR * lambda[p - 1];
    let inv: Vec<f64> = lambda[p - m..].iter().map(|&l| 1.0 / l.max(floor)).collect();

    let h2 = h * h;
    let mut amp = vec![0.0; m];
    let mut theta = vec![0.0; m];
    for i in 0..m {
        let (mut t, mut ht) = (0.0, 0.0);
        for &lj in &inv {
            let diff = lj - inv[i];
            let denom = diff * diff + h2 * lj * lj;
            t += lj * diff / denom;
            ht += lj * h * lj / denom;
        }
        t /= m as f64;
        ht /= m as f64;
        theta[i] = t;
        amp[i] = t * t + ht * ht;
    }

    let mut delta = Vec::with_capacity(p);
    if p <= n {
        for i in 0..m {
            let denom = (1.0 - c).powi(2) * inv[i]
                + 2.0 * c * (1.0 - c) * inv[i] * theta[i]
                + c * c * inv[i] * amp[i];
            delta.push(1.0 / denom);
        }
    } else {
        let mean_inv = inv.iter().sum::<f64>() / m as f64;
        let null = 1.0 / ((c - 1.0) * mean_inv);
        delta.extend(std::iter::repeat_n(null, p - m));
        delta.extend((0..m).map(|i| 1.0 / (inv[i] * amp[i])));
    }

    for d in delta.iter_mut() {
        if !d.is_finite() || *d < 0.0 {
            *d = 0.0;
        }
    }
    let mut delta = isotonic_nondecreasing(&delta);
    let sum: f64 = delta.iter().sum();
    if sum > 0.0 {
        let scale = total / sum;
        delta.iter_mut().for_each(|d| *d *= scale);
    }
    delta
}

/// Least-squares nondecreasing fit (pool adjacent violators).
fn isotonic_nondecreasing(v: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(v.len());
    for &x in v {
        blocks.push((x, 1));
        while blocks.len() > 1 {
            let (m2, c2) = blocks[blocks.len() - 1];
            let (m1, c1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            blocks.pop();
            let merged = (m1 * c1 as f64 + m2 * c2 as f64) / (c1 + c2) as f64;
            *blocks.last_mut().unwrap() = (merged, c1 + c2);
        }
    }
    blocks
        .into_iter()
        .flat_map(|(m, c)| std::iter::repeat_n(m, c))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pava() {
        assert_eq!(isotonic_nondecreasing(&[1.0, 3.0, 2.0, 4.0]), vec![1.0, 2.5, 2.5, 4.0]);
        assert_eq!(isotonic_nondecreasing(&[3.0, 2.0, 1.0]), vec![2.0, 2.0, 2.0]);
        assert_eq!(isotonic_nondecreasing(&[1.0, 2.0]), vec![1.0, 2.0]);
    }

    #[test]
    fn eigenvalue_contract_both_regimes() {
        let ascending: Vec<f64> = (1..=40).map(|k| (k as f64).powf(1.5) / 10.0).collect();
        for n in [20usize, 40, 100, 1000] {
            let d = qis_eigenvalues(&ascending, n);
            assert!(d.iter().all(|&x| x >= 0.0));
            assert!(d.windows(2).all(|w| w[0] <= w[1]));
            let (a, b): (f64, f64) = (d.iter().sum(), ascending.iter().sum());
            assert!((a - b).abs() <= 1e-10 * b);
            // shrinkage pulls the extremes inward
            assert!(d[39] <= ascending[39], "n = {n}");
            assert!(d[0] >= ascending[0], "n = {n}");
        }
    }

    #[test]
    fn singular_regime_null_eigenvalues_shared() {
        let mut lambda = vec![0.0; 10];
        lambda.extend((1..=5).map(|k| k as f64));
        let d = qis_eigenvalues(&lambda, 5);
        assert!(d[..10].windows(2).all(|w| w[0] == w[1]));
        assert!(d[0] > 0.0);
    }

    #[test]
    fn small_sample_errors() {
        let r = ResidualMatrix::from_values(DMatrix::from_fn(11, 3, |i, j| (i * j) as f64)).unwrap();
        assert!(nonlinear_shrinkage_qis(&r).is_err());
        let r = ResidualMatrix::from_values(DMatrix::from_fn(20, 1, |i, _| i as f64)).unwrap();
        assert!(nonlinear_shrinkage_qis(&r).is_err());
    }
}
