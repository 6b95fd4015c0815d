use nalgebra::DMatrix;

use super::{centered, covariance_of_centered, mean_estimate};
use crate::forest::ResidualMatrix;
use crate::{Error, Result};

/// `rho * nu * I + (1 - rho) * S` with `nu = trace(S) / p`.
pub fn linear_shrinkage_with_intensity(s: &DMatrix<f64>, rho: f64) -> DMatrix<f64> {
    let p = s.nrows();
    let nu = s.trace() / p as f64;
    let mut out = s * (1.0 - rho);
    for i in 0..p {
        out[(i, i)] += rho * nu;
    }
    out
}

/// Data-driven intensity of the well-conditioned linear shrinkage toward a
/// scaled identity, clipped to `[0, 1]`.
pub fn linear_shrinkage_intensity(r: &ResidualMatrix) -> Result<f64> {
    if r.n() < 2 {
        return Err(Error::invalid(format!("linear shrinkage needs n >= 2, found {}", r.n())));
    }
    let mu = mean_estimate(r)?;
    let x = centered(r, &mu);
    let s = covariance_of_centered(&x);
    Ok(intensity(&x, &s))
}

fn intensity(x: &DMatrix<f64>, s: &DMatrix<f64>) -> f64 {
    let (n, p) = x.shape();
    let (nf, pf) = (n as f64, p as f64);
    let nu = s.trace() / pf;
    // squared Frobenius norms are normalized by p
    let mut d2 = s.norm_squared();
    d2 += pf * nu * nu - 2.0 * nu * s.trace();
    d2 /= pf;
    if d2 <= 0.0 {
        return 0.0;
    }
    let fourth: f64 = x.row_iter().map(|row| row.norm_squared().powi(2)).sum();
    let b2_bar = ((fourth - nf * s.norm_squared()) / (nf * nf * pf)).max(0.0);
    (b2_bar.min(d2) / d2).clamp(0.0, 1.0)
}

pub fn linear_shrinkage(r: &ResidualMatrix) -> Result<DMatrix<f64>> {
    if r.n() < 2 {
        return Err(Error::invalid(format!("linear shrinkage needs n >= 2, found {}", r.n())));
    }
    let mu = mean_estimate(r)?;
    let x = centered(r, &mu);
    let s = covariance_of_centered(&x);
    let rho = intensity(&x, &s);
    Ok(linear_shrinkage_with_intensity(&s, rho))
}
