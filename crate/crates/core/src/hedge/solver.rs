//! Solver for `min w'Qw  s.t.  1'w = 1, ||w||_1 <= kappa`.
//!
//! `Q` is normalized to unit mean diagonal and ridged by `RIDGE * I`.
//!
//! * Without the L1 bound the problem is an equality-constrained QP, solved
//!   by eliminating one variable and factoring the reduced Hessian.
//! * With a finite bound, if the unbounded optimum already satisfies it we
//!   are done. Otherwise the bound is active and we run a primal-dual
//!   interior-point method (Mehrotra predictor-corrector) on the split
//!   `w = u - v`, `u, v >= 0`, `1'(u - v) = 1`, `1'(u + v) + s = kappa`
//!   (or directly on `w >= 0` when `kappa = 1`). Each Newton step reduces
//!   to one `p x p` Cholesky factorization. The
//!   interior solution is then polished by re-solving exactly on the face
//!   given by its sign pattern.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, Matrix2, Vector2};

use super::{HedgeProblem, Kappa, WeightVector};
use crate::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 200;
/// Ridge added to the normalized `Q`, relative to `trace(Q) / p`.
pub const RIDGE: f64 = 1e-10;
/// Bounds this close to one are solved as the nonnegative-weights problem.
const SIMPLEX_MARGIN: f64 = 1e-9;

/// Minimizes the estimated MSE of the combination under the sum-to-one and
/// gross-exposure constraints. `tol` is the relative duality-gap target of
/// the interior-point iterations.
pub fn solve_hedged_weights(problem: &HedgeProblem, tol: f64, max_iter: usize) -> Result<WeightVector> {
    let p = problem.p();
    let sigma = &problem.sigma_hat;
    check_psd(sigma)?;

    let mut q = sigma + &problem.mu_hat * problem.mu_hat.transpose();
    for i in 0..p {
        for j in 0..i {
            let v = 0.5 * (q[(i, j)] + q[(j, i)]);
            q[(i, j)] = v;
            q[(j, i)] = v;
        }
    }
    let scale = q.trace() / p as f64;
    if scale <= 0.0 || q.iter().all(|&v| v == 0.0) {
        log::debug!("objective is identically zero; returning equal weights");
        let mut w = WeightVector::equal(p, problem.kappa);
        w.degenerate = true;
        return Ok(w);
    }
    q /= scale;
    for i in 0..p {
        q[(i, i)] += RIDGE;
    }

    let finish = |weights: Vec<f64>, iterations: usize| WeightVector {
        objective: problem.objective(&weights).max(0.0),
        weights,
        kappa: problem.kappa,
        iterations,
        degenerate: false,
    };

    let all: Vec<usize> = (0..p).collect();
    let unbounded = solve_on_face(&q, &all, None)
        .ok_or_else(|| Error::Singular("reduced Hessian is not positive definite".into()))?;

    let kappa = match problem.kappa {
        Kappa::Unbounded => return Ok(finish(unbounded, 0)),
        Kappa::Finite(k) => k,
    };
    if l1(&unbounded) <= kappa {
        return Ok(finish(unbounded, 0));
    }

    let ipm = if kappa <= 1.0 + SIMPLEX_MARGIN {
        let kkt = Simplex { q: &q };
        mehrotra(&kkt, kkt.start(), tol, max_iter)
    } else {
        let kkt = Split { q: &q, kappa };
        mehrotra(&kkt, kkt.start(), tol, max_iter)
    };
    let f_ipm = quad(&q, &ipm.w);
    let polished = polish(&q, &ipm.w, kappa, f_ipm);
    match (polished, ipm.converged) {
        (Some(w), _) => Ok(finish(w, ipm.iterations)),
        (None, true) => Ok(finish(ipm.w, ipm.iterations)),
        (None, false) => Err(Error::NotConverged {
            iterations: ipm.iterations,
            residual: ipm.residual,
            best: Box::new(finish(ipm.w, ipm.iterations)),
        }),
    }
}

/// Rejects asymmetric input or eigenvalues below `-1e-8 * trace`.
fn check_psd(sigma: &DMatrix<f64>) -> Result<()> {
    let amax = sigma.amax();
    if amax == 0.0 {
        return Ok(());
    }
    let p = sigma.nrows();
    for i in 0..p {
        for j in 0..i {
            if (sigma[(i, j)] - sigma[(j, i)]).abs() > 1e-10 * amax {
                return Err(Error::NotPsd(format!("asymmetric at ({i}, {j})")));
            }
        }
    }
    let trace = sigma.trace();
    if trace < 0.0 || sigma.diagonal().iter().any(|&d| d < -1e-8 * amax) {
        return Err(Error::NotPsd("negative diagonal".into()));
    }
    let shift = 1e-8 * trace.max(amax);
    let mut shifted = sigma.clone();
    for i in 0..p {
        shifted[(i, i)] += shift;
    }
    if Cholesky::new(shifted).is_none() {
        return Err(Error::NotPsd("has a negative eigenvalue beyond tolerance".into()));
    }
    Ok(())
}

fn l1(w: &[f64]) -> f64 {
    w.iter().map(|v| v.abs()).sum()
}

fn quad(q: &DMatrix<f64>, w: &[f64]) -> f64 {
    let w = DVector::from_column_slice(w);
    w.dot(&(q * &w))
}

/// Minimizes `w'Qw` over `w` supported on `free` with `sum(w) = 1` and, if
/// `signs` is given, `sum(signs_j * w_j) = kappa` as well. Solved by
/// eliminating one (or two) pivot variables and factoring the reduced
/// Hessian. Returns `None` if the face is infeasible or the factorization
/// fails.
fn solve_on_face(q: &DMatrix<f64>, free: &[usize], signs: Option<(&[f64], f64)>) -> Option<Vec<f64>> {
    let p = q.nrows();
    let nf = free.len();
    if nf == 0 {
        return None;
    }
    // constraint rows over the free variables
    let mut rows: Vec<(Vec<f64>, f64)> = vec![(vec![1.0; nf], 1.0)];
    let mut pivots = vec![nf - 1];
    if let Some((s, kappa)) = signs {
        let s_free: Vec<f64> = free.iter().map(|&j| s[j]).collect();
        let pos = s_free.iter().rposition(|&v| v > 0.0);
        let neg = s_free.iter().rposition(|&v| v < 0.0);
        match (pos, neg) {
            (Some(a), Some(b)) => {
                rows.push((s_free, kappa));
                pivots = vec![a, b];
            }
            // all signs positive: the two constraints coincide when kappa = 1
            (Some(_), None) if (kappa - 1.0).abs() <= 1e-12 => {}
            _ => return None,
        }
    }
    let k = rows.len();
    let others: Vec<usize> = (0..nf).filter(|i| !pivots.contains(i)).collect();
    let r = others.len();

    // C_B w_B + C_N w_N = d  =>  w_B = b0 - G w_N
    let cb = DMatrix::from_fn(k, k, |a, b| rows[a].0[pivots[b]]);
    let cb_inv = cb.try_inverse()?;
    let d = DVector::from_iterator(k, rows.iter().map(|r| r.1));
    let b0 = &cb_inv * d;
    let cn = DMatrix::from_fn(k, r, |a, b| rows[a].0[others[b]]);
    let g = &cb_inv * cn;

    let idx_b: Vec<usize> = pivots.iter().map(|&i| free[i]).collect();
    let idx_n: Vec<usize> = others.iter().map(|&i| free[i]).collect();

    let mut w = vec![0.0; p];
    if r == 0 {
        for (a, &j) in idx_b.iter().enumerate() {
            w[j] = b0[a];
        }
        return Some(w);
    }

    let q_nn = q.select_rows(&idx_n).select_columns(&idx_n);
    let q_nb = q.select_rows(&idx_n).select_columns(&idx_b);
    let q_bb = q.select_rows(&idx_b).select_columns(&idx_b);

    let q_nb_g = &q_nb * &g;
    let mut h = q_nn - &q_nb_g - q_nb_g.transpose() + g.transpose() * (&q_bb * &g);
    for i in 0..r {
        for j in 0..i {
            let v = 0.5 * (h[(i, j)] + h[(j, i)]);
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    let rhs = g.transpose() * (&q_bb * &b0) - &q_nb * &b0;
    let w_n = Cholesky::new(h)?.solve(&rhs);
    let w_b = b0 - &g * &w_n;
    for (a, &j) in idx_n.iter().enumerate() {
        w[j] = w_n[a];
    }
    for (a, &j) in idx_b.iter().enumerate() {
        w[j] = w_b[a];
    }
    w.iter().all(|v| v.is_finite()).then_some(w)
}

/// Re-solves on the face defined by the sign pattern of `w`, trying a few
/// zero thresholds. A candidate is accepted if it is feasible, consistent
/// with its sign pattern, and no worse than `f_ref`.
fn polish(q: &DMatrix<f64>, w: &[f64], kappa: f64, f_ref: f64) -> Option<Vec<f64>> {
    let p = w.len();
    let wmax = w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut best: Option<(Vec<f64>, f64)> = None;
    for rel in [1e-9, 1e-7, 1e-5, 1e-3] {
        let cut = rel * wmax;
        let free: Vec<usize> = (0..p).filter(|&j| w[j].abs() > cut).collect();
        let signs: Vec<f64> = w.iter().map(|&v| if v > cut { 1.0 } else if v < -cut { -1.0 } else { 0.0 }).collect();
        let Some(cand) = solve_on_face(q, &free, Some((&signs, kappa))) else {
            continue;
        };
        let consistent = free.iter().all(|&j| cand[j] * signs[j] >= 0.0);
        let sum: f64 = cand.iter().sum();
        if !consistent || (sum - 1.0).abs() > 1e-12 || l1(&cand) > kappa * (1.0 + 1e-12) {
            continue;
        }
        let f = quad(q, &cand);
        if f <= f_ref * (1.0 + 1e-9) + 1e-15 && best.as_ref().is_none_or(|b| f < b.1) {
            best = Some((cand, f));
        }
    }
    best.map(|b| b.0)
}

/// Gaps below `tol * GAP_FLOOR` count as converged even when the optimal
/// objective is (nearly) zero. `Q` has unit mean diagonal at this point.
const GAP_FLOOR: f64 = 1e-4;
/// Fraction of the distance to the boundary taken per step.
const STEP_FRACTION: f64 = 0.995;

struct IpmResult {
    w: Vec<f64>,
    iterations: usize,
    converged: bool,
    residual: f64,
}

/// Primal variables `x >= 0`, their multipliers `lam >= 0`, and the
/// equality multipliers `y`.
struct PrimalDual {
    x: DVector<f64>,
    lam: DVector<f64>,
    y: Vec<f64>,
}

struct Direction {
    dx: DVector<f64>,
    dlam: DVector<f64>,
    dy: Vec<f64>,
}

/// Problem-specific part of the interior-point method for
/// `min f(x)  s.t.  A x = b, x >= 0`.
trait Kkt {
    type Factor;

    /// Dual residual `grad f(x) - A'y - lam`, primal residual `A x - b`,
    /// objective value and gradient sup-norm.
    fn residuals(&self, pd: &PrimalDual) -> (DVector<f64>, Vec<f64>, f64, f64);

    /// Factorizes `H + diag(lam / x)` for the current iterate.
    fn factor(&self, pd: &PrimalDual) -> Option<Self::Factor>;

    /// Solves `(H + diag(lam / x)) dx - A'dy = g`, `A dx = -rp`.
    fn solve(&self, factor: &Self::Factor, g: &DVector<f64>, rp: &[f64]) -> (DVector<f64>, Vec<f64>);

    fn weights(&self, x: &DVector<f64>) -> Vec<f64>;

    /// Scale of the right-hand side `b`, for the primal residual test.
    fn rhs_scale(&self) -> f64;
}

fn direction<K: Kkt>(kkt: &K, factor: &K::Factor, pd: &PrimalDual, rd: &DVector<f64>, rp: &[f64], rc: &DVector<f64>) -> Direction {
    let g = -rd + rc.component_div(&pd.x);
    let (dx, dy) = kkt.solve(factor, &g, rp);
    let dlam = (rc - pd.lam.component_mul(&dx)).component_div(&pd.x);
    Direction { dx, dlam, dy }
}

fn max_step(pd: &PrimalDual, d: &Direction) -> f64 {
    let mut alpha: f64 = 1.0;
    for (v, dv) in pd.x.iter().zip(d.dx.iter()).chain(pd.lam.iter().zip(d.dlam.iter())) {
        if *dv < 0.0 {
            alpha = alpha.min(-v / dv);
        }
    }
    alpha
}

/// Mehrotra predictor-corrector iterations with a common primal and dual
/// step length.
fn mehrotra<K: Kkt>(kkt: &K, mut pd: PrimalDual, tol: f64, max_iter: usize) -> IpmResult {
    let m = pd.x.len() as f64;
    let mut iterations = 0;
    let mut residual;
    let mut converged = false;
    loop {
        let (rd, rp, f, gnorm) = kkt.residuals(&pd);
        let primal_inf = rp.iter().fold(0.0f64, |a, v| a.max(v.abs())) / (1.0 + kkt.rhs_scale());
        let dual_inf = rd.amax() / (1.0 + gnorm);
        let gap = pd.x.dot(&pd.lam);
        let gap_target = tol * f.max(GAP_FLOOR);
        residual = primal_inf.max(dual_inf).max(gap / f.max(GAP_FLOOR));
        if primal_inf <= 1e-12 && dual_inf <= 1e-12 && gap <= gap_target {
            converged = true;
            break;
        }
        if iterations >= max_iter {
            break;
        }
        let Some(factor) = kkt.factor(&pd) else {
            break;
        };
        iterations += 1;
        let mu = gap / m;

        let rc_aff = -pd.x.component_mul(&pd.lam);
        let aff = direction(kkt, &factor, &pd, &rd, &rp, &rc_aff);
        let a_aff = max_step(&pd, &aff);
        let mu_aff = (&pd.x + &aff.dx * a_aff).dot(&(&pd.lam + &aff.dlam * a_aff)) / m;
        let sigma = (mu_aff / mu).powi(3).clamp(0.0, 1.0);

        let rc = (rc_aff - aff.dx.component_mul(&aff.dlam)).add_scalar(sigma * mu);
        let d = direction(kkt, &factor, &pd, &rd, &rp, &rc);
        let alpha = (STEP_FRACTION * max_step(&pd, &d)).min(1.0);

        pd.x += &d.dx * alpha;
        pd.lam += &d.dlam * alpha;
        for (y, dy) in pd.y.iter_mut().zip(&d.dy) {
            *y += alpha * dy;
        }
        for v in pd.x.iter_mut().chain(pd.lam.iter_mut()) {
            *v = v.max(f64::MIN_POSITIVE);
        }
    }
    IpmResult {
        w: kkt.weights(&pd.x),
        iterations,
        converged,
        residual,
    }
}

/// Gradient `2 Q w` of the objective.
fn gradient(q: &DMatrix<f64>, w: &DVector<f64>) -> DVector<f64> {
    q * w * 2.0
}

/// `kappa = 1`: nonnegative weights summing to one. The split formulation
/// has no strictly feasible point here, so this case gets its own system
/// with `x = w` and the single row `1'w = 1`.
struct Simplex<'a> {
    q: &'a DMatrix<f64>,
}

struct SimplexFactor {
    chol: Cholesky<f64, Dyn>,
    k_one: DVector<f64>,
    m: f64,
}

impl Simplex<'_> {
    fn start(&self) -> PrimalDual {
        let p = self.q.nrows();
        PrimalDual {
            x: DVector::from_element(p, 1.0 / p as f64),
            lam: DVector::from_element(p, 1.0),
            y: vec![0.0],
        }
    }
}

impl Kkt for Simplex<'_> {
    type Factor = SimplexFactor;

    fn residuals(&self, pd: &PrimalDual) -> (DVector<f64>, Vec<f64>, f64, f64) {
        let g = gradient(self.q, &pd.x);
        let f = 0.5 * pd.x.dot(&g);
        let gnorm = g.amax();
        let rd = g.add_scalar(-pd.y[0]) - &pd.lam;
        (rd, vec![pd.x.sum() - 1.0], f, gnorm)
    }

    fn factor(&self, pd: &PrimalDual) -> Option<SimplexFactor> {
        let mut k = self.q * 2.0;
        for i in 0..k.nrows() {
            k[(i, i)] += pd.lam[i] / pd.x[i];
        }
        let chol = Cholesky::new(k)?;
        let k_one = chol.solve(&DVector::from_element(pd.x.len(), 1.0));
        let m = k_one.sum();
        (m > 0.0 && m.is_finite()).then_some(SimplexFactor { chol, k_one, m })
    }

    fn solve(&self, f: &SimplexFactor, g: &DVector<f64>, rp: &[f64]) -> (DVector<f64>, Vec<f64>) {
        let kg = f.chol.solve(g);
        let dy = (-rp[0] - kg.sum()) / f.m;
        (kg + &f.k_one * dy, vec![dy])
    }

    fn weights(&self, x: &DVector<f64>) -> Vec<f64> {
        x.as_slice().to_vec()
    }

    fn rhs_scale(&self) -> f64 {
        1.0
    }
}

/// `kappa > 1`: `x = (u, v, s)` with `w = u - v` and rows
/// `1'u - 1'v = 1`, `1'u + 1'v + s = kappa`.
struct Split<'a> {
    q: &'a DMatrix<f64>,
    kappa: f64,
}

struct SplitFactor {
    chol: Cholesky<f64, Dyn>,
    du: DVector<f64>,
    dv: DVector<f64>,
    ds: f64,
    /// `K^{-1} a_k` for the two constraint rows.
    ka: [DVector<f64>; 2],
    m_inv: Matrix2<f64>,
}

impl Split<'_> {
    fn p(&self) -> usize {
        self.q.nrows()
    }

    fn start(&self) -> PrimalDual {
        let p = self.p();
        let pf = p as f64;
        let spread = (self.kappa - 1.0).min(1.0) / 2.0 + 0.25;
        let mut x = DVector::zeros(2 * p + 1);
        x.rows_mut(0, p).fill((1.0 + spread) / pf);
        x.rows_mut(p, p).fill(spread / pf);
        x[2 * p] = (self.kappa - 1.0 - 2.0 * spread).max(0.5);
        PrimalDual {
            x,
            lam: DVector::from_element(2 * p + 1, 1.0),
            y: vec![0.0, 0.0],
        }
    }

    /// Solves `K z = r` with
    /// `K = [[2Q + Du, -2Q, 0], [-2Q, 2Q + Dv, 0], [0, 0, Ds]]`.
    /// Substituting `t = a - b` and `r = r_u + r_v` leaves one `p x p`
    /// system `(2Q + Du Dv / (Du + Dv)) t = r_u - Du r / (Du + Dv)`.
    fn solve_k(&self, f: &SplitFactor, r: &DVector<f64>) -> DVector<f64> {
        let p = self.p();
        let r_u = r.rows(0, p);
        let r_v = r.rows(p, p);
        let sum = r_u + r_v;
        let den = &f.du + &f.dv;
        let rhs = r_u - f.du.component_mul(&sum).component_div(&den);
        let t = f.chol.solve(&rhs);
        let a = (&sum + f.dv.component_mul(&t)).component_div(&den);
        let b = (&sum - f.du.component_mul(&t)).component_div(&den);
        let mut z = DVector::zeros(2 * p + 1);
        z.rows_mut(0, p).copy_from(&a);
        z.rows_mut(p, p).copy_from(&b);
        z[2 * p] = r[2 * p] / f.ds;
        z
    }

    /// `A z` for both rows.
    fn apply_a(&self, z: &DVector<f64>) -> [f64; 2] {
        let p = self.p();
        let su = z.rows(0, p).sum();
        let sv = z.rows(p, p).sum();
        [su - sv, su + sv + z[2 * p]]
    }

    fn row(&self, k: usize) -> DVector<f64> {
        let p = self.p();
        let mut a = DVector::from_element(2 * p + 1, 1.0);
        if k == 0 {
            a.rows_mut(p, p).fill(-1.0);
            a[2 * p] = 0.0;
        }
        a
    }
}

impl Kkt for Split<'_> {
    type Factor = SplitFactor;

    fn residuals(&self, pd: &PrimalDual) -> (DVector<f64>, Vec<f64>, f64, f64) {
        let p = self.p();
        let w = pd.x.rows(0, p) - pd.x.rows(p, p);
        let g = gradient(self.q, &w);
        let f = 0.5 * w.dot(&g);
        let (y0, y1) = (pd.y[0], pd.y[1]);
        let mut rd = DVector::zeros(2 * p + 1);
        rd.rows_mut(0, p).copy_from(&g.add_scalar(-(y0 + y1)));
        rd.rows_mut(p, p).copy_from(&(-&g).add_scalar(y0 - y1));
        rd[2 * p] = -y1;
        rd -= &pd.lam;
        let ax = self.apply_a(&pd.x);
        (rd, vec![ax[0] - 1.0, ax[1] - self.kappa], f, g.amax())
    }

    fn factor(&self, pd: &PrimalDual) -> Option<SplitFactor> {
        let p = self.p();
        let d = pd.lam.component_div(&pd.x);
        let du = d.rows(0, p).into_owned();
        let dv = d.rows(p, p).into_owned();
        let mut k = self.q * 2.0;
        for i in 0..p {
            k[(i, i)] += du[i] * dv[i] / (du[i] + dv[i]);
        }
        let mut f = SplitFactor {
            chol: Cholesky::new(k)?,
            du,
            dv,
            ds: d[2 * p],
            ka: [DVector::zeros(0), DVector::zeros(0)],
            m_inv: Matrix2::zeros(),
        };
        let k0 = self.solve_k(&f, &self.row(0));
        let k1 = self.solve_k(&f, &self.row(1));
        let (a0, a1) = (self.apply_a(&k0), self.apply_a(&k1));
        f.m_inv = Matrix2::new(a0[0], a1[0], a0[1], a1[1]).try_inverse()?;
        f.ka = [k0, k1];
        Some(f)
    }

    fn solve(&self, f: &SplitFactor, g: &DVector<f64>, rp: &[f64]) -> (DVector<f64>, Vec<f64>) {
        // dx = K^{-1}(g + A'dy) with A dx = -rp
        let kg = self.solve_k(f, g);
        let akg = self.apply_a(&kg);
        let dy = f.m_inv * Vector2::new(-rp[0] - akg[0], -rp[1] - akg[1]);
        let dx = kg + &f.ka[0] * dy[0] + &f.ka[1] * dy[1];
        (dx, vec![dy[0], dy[1]])
    }

    fn weights(&self, x: &DVector<f64>) -> Vec<f64> {
        let p = self.p();
        (x.rows(0, p) - x.rows(p, p)).as_slice().to_vec()
    }

    fn rhs_scale(&self) -> f64 {
        self.kappa
    }
}
