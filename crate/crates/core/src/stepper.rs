//! Implicit marching. Every step reduces to the nonlinear resolvent
//!
//! ```text
//! u + lambda (-Delta)^s phi(u) = g,   lambda = 1 / diag,   g = rhs / diag
//! ```
//!
//! solved by damped Newton with a spectrally preconditioned GMRES inner
//! solve, falling back to a Picard iteration when the line search stalls.

use crate::error::{Error, Result};
use crate::fracops::{marchaud_weights, memory_sum, History, Params, SpectralOperator, StepStats};
use crate::grid::{Field, Grid};

/// `phi(w) = |w|^{m-1} w` and its inverse `theta(u) = |u|^{1/m-1} u`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NonlinearityPhi {
    m: f64,
}

impl NonlinearityPhi {
    pub fn new(m: f64) -> Result<Self> {
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::InvalidParams(format!("m must be positive, got {m}")));
        }
        Ok(NonlinearityPhi { m })
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn phi(&self, w: f64) -> f64 {
        if self.m == 1.0 || w == 0.0 {
            w
        } else {
            w.abs().powf(self.m - 1.0) * w
        }
    }

    pub fn dphi(&self, w: f64) -> f64 {
        if self.m == 1.0 {
            1.0
        } else {
            self.m * w.abs().powf(self.m - 1.0)
        }
    }

    pub fn theta(&self, u: f64) -> f64 {
        if self.m == 1.0 || u == 0.0 {
            u
        } else {
            u.abs().powf(1.0 / self.m - 1.0) * u
        }
    }

    /// `theta'(u) = |u|^{1/m - 1} / m`; infinite at zero when `m > 1`.
    pub fn dtheta(&self, u: f64) -> f64 {
        if self.m == 1.0 {
            1.0
        } else {
            u.abs().powf(1.0 / self.m - 1.0) / self.m
        }
    }

    pub fn apply(&self, field: &Field) -> Field {
        field.map(|w| self.phi(w))
    }
}

/// Outcome of one implicit step.
#[derive(Clone, Debug)]
pub struct StepResult {
    pub field: Field,
    pub residual_norm: f64,
    pub iterations: usize,
    pub used_fallback: bool,
}

impl StepResult {
    pub fn stats(&self) -> StepStats {
        StepStats { iterations: self.iterations, residual: self.residual_norm, used_fallback: self.used_fallback }
    }
}

const GMRES_RESTART: usize = 40;
const GMRES_MAX_CYCLES: usize = 20;
const INNER_FORCING: f64 = 1e-2;
const MAX_HALVINGS: usize = 30;
const PICARD_MAX_ITER: usize = 50_000;

/// Solver for `u + lambda L phi(u) = g` with `L = (-Delta)^s`, `s` in `(0, 1]`.
#[derive(Clone, Debug)]
pub struct Resolvent {
    op: SpectralOperator,
    tol: f64,
    max_iter: usize,
}

impl Resolvent {
    pub fn new(grid: &Grid, s: f64, tol: f64, max_iter: usize) -> Result<Self> {
        if !(s > 0.0 && s <= 1.0) {
            return Err(Error::InvalidParams(format!("fractional order must lie in (0, 1], got {s}")));
        }
        if !(tol > 0.0) || max_iter == 0 {
            return Err(Error::InvalidParams("tolerance and iteration budget must be positive".into()));
        }
        Ok(Resolvent { op: SpectralOperator::frac_laplacian(grid, s), tol, max_iter })
    }

    pub fn operator(&self) -> &SpectralOperator {
        &self.op
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    /// Sup norm of `u + lambda L phi(u) - g`.
    pub fn residual(&self, lambda: f64, g: &Field, phi: NonlinearityPhi, u: &Field) -> f64 {
        residual_vec(&self.op, lambda, g.values(), phi, u.values()).iter().fold(0.0, |a, r| a.max(r.abs()))
    }

    /// Solves from the initial guess `guess` (or `g` when absent).
    pub fn solve(&self, lambda: f64, g: &Field, phi: NonlinearityPhi, guess: Option<&Field>) -> Result<StepResult> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParams(format!("resolvent parameter must be positive, got {lambda}")));
        }
        if g.grid() != self.op.grid() {
            return Err(Error::GridMismatch);
        }
        let start = match guess {
            Some(u) if u.grid() == g.grid() => u.values().to_vec(),
            Some(_) => return Err(Error::GridMismatch),
            None => g.values().to_vec(),
        };
        let target_mean = g.mean();
        let newton = if phi.m() >= 1.0 {
            self.newton_u(lambda, g.values(), phi, start.clone())
        } else {
            self.newton_v(lambda, g.values(), phi, start.clone())
        };
        let (mut u, mut iterations, mut used_fallback) = match newton {
            Ok((u, it)) => (u, it, false),
            Err((best, it)) => {
                let (u, pit) = self.picard(lambda, g.values(), phi, best)?;
                (u, it + pit, true)
            }
        };
        // the zero mode of L vanishes, so the exact solution has the mean of g
        let shift = target_mean - mean(&u);
        u.iter_mut().for_each(|x| *x += shift);
        let residual = residual_vec(&self.op, lambda, g.values(), phi, &u).iter().fold(0.0, |a: f64, r| a.max(r.abs()));
        if !(residual <= self.tol) {
            // one more Picard polish when the shift or roundoff pushed us over
            let (v, pit) = self.picard(lambda, g.values(), phi, u)?;
            u = v;
            iterations += pit;
            used_fallback = true;
            let shift = target_mean - mean(&u);
            u.iter_mut().for_each(|x| *x += shift);
        }
        let residual = residual_vec(&self.op, lambda, g.values(), phi, &u).iter().fold(0.0, |a: f64, r| a.max(r.abs()));
        let field = Field::new(g.grid(), u)?;
        if !(residual <= self.tol) {
            return Err(Error::NonConvergence { iterations, residual });
        }
        Ok(StepResult { field, residual_norm: residual, iterations, used_fallback })
    }

    /// Newton in `u`; the Jacobian `I + lambda L diag(phi')` is invertible for `m >= 1`.
    fn newton_u(
        &self,
        lambda: f64,
        g: &[f64],
        phi: NonlinearityPhi,
        mut u: Vec<f64>,
    ) -> std::result::Result<(Vec<f64>, usize), (Vec<f64>, usize)> {
        let mut r = residual_vec(&self.op, lambda, g, phi, &u);
        let mut norm = sup(&r);
        for it in 0..self.max_iter {
            if norm <= 0.1 * self.tol {
                return Ok((u, it));
            }
            let d: Vec<f64> = u.iter().map(|&x| phi.dphi(x)).collect();
            let c_bar = mean(&d).max(1e-300);
            let precond = self.op.map(|mu| 1.0 / (1.0 + lambda * c_bar * mu));
            let jac = |x: &[f64]| -> Vec<f64> {
                let dx: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a * b).collect();
                let ldx = apply(&self.op, &dx);
                x.iter().zip(&ldx).map(|(a, b)| a + lambda * b).collect()
            };
            let rhs: Vec<f64> = r.iter().map(|x| -x).collect();
            let mut delta = gmres(&jac, &|x| apply(&precond, x), &rhs, INNER_FORCING);
            // mean(J delta) = mean(delta), so fix the mean exactly
            let shift = -mean(&r) - mean(&delta);
            delta.iter_mut().for_each(|x| *x += shift);
            match line_search(&u, &delta, norm, |cand| residual_vec(&self.op, lambda, g, phi, cand)) {
                Some((next, next_r, next_norm)) => {
                    u = next;
                    r = next_r;
                    norm = next_norm;
                }
                None => return Err((u, it + 1)),
            }
        }
        if norm <= self.tol {
            Ok((u, self.max_iter))
        } else {
            Err((u, self.max_iter))
        }
    }

    /// Newton in `v = phi(u)` for `m < 1`, where `phi'` is unbounded at zero.
    fn newton_v(
        &self,
        lambda: f64,
        g: &[f64],
        phi: NonlinearityPhi,
        u0: Vec<f64>,
    ) -> std::result::Result<(Vec<f64>, usize), (Vec<f64>, usize)> {
        let residual_in_v = |v: &[f64]| -> Vec<f64> {
            let lv = apply(&self.op, v);
            v.iter().zip(&lv).zip(g).map(|((&vi, &l), &gi)| phi.theta(vi) + lambda * l - gi).collect()
        };
        let mut v: Vec<f64> = u0.iter().map(|&x| phi.phi(x)).collect();
        let mut r = residual_in_v(&v);
        let mut norm = sup(&r);
        let to_u = |v: Vec<f64>| v.into_iter().map(|x| phi.theta(x)).collect::<Vec<f64>>();
        for it in 0..self.max_iter {
            if norm <= 0.1 * self.tol {
                return Ok((to_u(v), it));
            }
            let d: Vec<f64> = v.iter().map(|&x| phi.dtheta(x)).collect();
            let c_bar = mean(&d).max(1e-12);
            let precond = self.op.map(|mu| 1.0 / (c_bar + lambda * mu));
            let jac = |x: &[f64]| -> Vec<f64> {
                let lx = apply(&self.op, x);
                x.iter().zip(&d).zip(&lx).map(|((a, di), l)| di * a + lambda * l).collect()
            };
            let rhs: Vec<f64> = r.iter().map(|x| -x).collect();
            let delta = gmres(&jac, &|x| apply(&precond, x), &rhs, INNER_FORCING);
            match line_search(&v, &delta, norm, residual_in_v) {
                Some((next, next_r, next_norm)) => {
                    v = next;
                    r = next_r;
                    norm = next_norm;
                }
                None => return Err((to_u(v), it + 1)),
            }
        }
        if norm <= self.tol {
            Ok((to_u(v), self.max_iter))
        } else {
            Err((to_u(v), self.max_iter))
        }
    }

    /// Slow but globally convergent splitting iteration, used as fallback.
    fn picard(&self, lambda: f64, g: &[f64], phi: NonlinearityPhi, u: Vec<f64>) -> Result<(Vec<f64>, usize)> {
        let (picard, iterations, residual) =
            picard_iteration(&self.op, lambda, g, phi, u, 0.1 * self.tol, PICARD_MAX_ITER);
        if residual <= self.tol {
            Ok((picard, iterations))
        } else {
            Err(Error::NonConvergence { iterations, residual })
        }
    }
}

/// Splitting iteration. For `m >= 1` it iterates in `u` with
/// `u <- (I + lambda c L)^{-1} (g - lambda L (phi(u) - c u))`, `c >= sup phi'`;
/// for `m < 1` the same in `v = phi(u)` with `c >= sup theta'`.
/// Returns the iterate, the iteration count and the final residual.
pub(crate) fn picard_iteration(
    op: &SpectralOperator,
    lambda: f64,
    g: &[f64],
    phi: NonlinearityPhi,
    mut u: Vec<f64>,
    tol: f64,
    max_iter: usize,
) -> (Vec<f64>, usize, f64) {
    // iterates stay inside the range of g and the start by the maximum principle
    let bound = g.iter().chain(&u).fold(0.0f64, |a, x| a.max(x.abs()));
    let mut residual = sup(&residual_vec(op, lambda, g, phi, &u));
    if phi.m() >= 1.0 {
        let c = phi.dphi(bound).max(1e-300);
        let inv = op.map(|mu| 1.0 / (1.0 + lambda * c * mu));
        for it in 0..max_iter {
            if residual <= tol {
                return (u, it, residual);
            }
            let psi: Vec<f64> = u.iter().map(|&x| phi.phi(x) - c * x).collect();
            let lpsi = apply(op, &psi);
            let rhs: Vec<f64> = g.iter().zip(&lpsi).map(|(gi, l)| gi - lambda * l).collect();
            u = apply(&inv, &rhs);
            residual = sup(&residual_vec(op, lambda, g, phi, &u));
        }
    } else {
        let mut v: Vec<f64> = u.iter().map(|&x| phi.phi(x)).collect();
        let c = phi.dtheta(phi.phi(bound)).max(1e-300);
        let inv = op.map(|mu| 1.0 / (c + lambda * mu));
        for it in 0..max_iter {
            if residual <= tol {
                return (v.iter().map(|&x| phi.theta(x)).collect(), it, residual);
            }
            let rhs: Vec<f64> = g.iter().zip(&v).map(|(gi, &vi)| gi - phi.theta(vi) + c * vi).collect();
            v = apply(&inv, &rhs);
            u = v.iter().map(|&x| phi.theta(x)).collect();
            residual = sup(&residual_vec(op, lambda, g, phi, &u));
        }
    }
    (u, max_iter, residual)
}

fn residual_vec(op: &SpectralOperator, lambda: f64, g: &[f64], phi: NonlinearityPhi, u: &[f64]) -> Vec<f64> {
    let pu: Vec<f64> = u.iter().map(|&x| phi.phi(x)).collect();
    let lpu = apply(op, &pu);
    u.iter().zip(&lpu).zip(g).map(|((ui, l), gi)| ui + lambda * l - gi).collect()
}

fn line_search(
    x: &[f64],
    delta: &[f64],
    norm: f64,
    residual: impl Fn(&[f64]) -> Vec<f64>,
) -> Option<(Vec<f64>, Vec<f64>, f64)> {
    let mut alpha = 1.0;
    for _ in 0..=MAX_HALVINGS {
        let cand: Vec<f64> = x.iter().zip(delta).map(|(a, d)| a + alpha * d).collect();
        let r = residual(&cand);
        let n = sup(&r);
        if n < norm {
            return Some((cand, r, n));
        }
        alpha *= 0.5;
    }
    None
}

fn apply(op: &SpectralOperator, x: &[f64]) -> Vec<f64> {
    op.apply_unchecked(&Field::from_raw(op.grid(), x.to_vec())).into_values()
}

fn sup(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |a, v| a.max(v.abs()))
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Right-preconditioned restarted GMRES for `A x = b` from `x = 0`, stopping at
/// relative residual `rtol`.
pub(crate) fn gmres(
    a: &dyn Fn(&[f64]) -> Vec<f64>,
    precond: &dyn Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    rtol: f64,
) -> Vec<f64> {
    let n = b.len();
    let b_norm = dot(b, b).sqrt();
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return x;
    }
    let target = rtol * b_norm;
    for _ in 0..GMRES_MAX_CYCLES {
        let ax = a(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let beta = dot(&r, &r).sqrt();
        if beta <= target {
            break;
        }
        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut z_basis: Vec<Vec<f64>> = Vec::new();
        let mut h: Vec<Vec<f64>> = Vec::new();
        let mut cs: Vec<f64> = Vec::new();
        let mut sn: Vec<f64> = Vec::new();
        let mut e = vec![beta];
        let mut converged = false;
        for j in 0..GMRES_RESTART {
            let z = precond(&basis[j]);
            let mut w = a(&z);
            z_basis.push(z);
            let mut col = vec![0.0; j + 2];
            // modified Gram-Schmidt
            for (i, v) in basis.iter().enumerate() {
                let hij = dot(&w, v);
                col[i] = hij;
                w.iter_mut().zip(v).for_each(|(wk, vk)| *wk -= hij * vk);
            }
            let w_norm = dot(&w, &w).sqrt();
            col[j + 1] = w_norm;
            for i in 0..j {
                let t = cs[i] * col[i] + sn[i] * col[i + 1];
                col[i + 1] = -sn[i] * col[i] + cs[i] * col[i + 1];
                col[i] = t;
            }
            let rho = col[j].hypot(col[j + 1]);
            let (c, s) = if rho == 0.0 { (1.0, 0.0) } else { (col[j] / rho, col[j + 1] / rho) };
            cs.push(c);
            sn.push(s);
            col[j] = rho;
            col[j + 1] = 0.0;
            e.push(-s * e[j]);
            e[j] *= c;
            h.push(col);
            if e[j + 1].abs() <= target || w_norm <= 1e-300 {
                converged = true;
                break;
            }
            basis.push(w.iter().map(|v| v / w_norm).collect());
        }
        // back substitution on the triangular system
        let k = h.len();
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut acc = e[i];
            for (l, yl) in y.iter().enumerate().skip(i + 1) {
                acc -= h[l][i] * yl;
            }
            y[i] = if h[i][i] != 0.0 { acc / h[i][i] } else { 0.0 };
        }
        for (yi, z) in y.iter().zip(&z_basis) {
            x.iter_mut().zip(z).for_each(|(xk, zk)| *xk += yi * zk);
        }
        if converged {
            break;
        }
    }
    x
}

/// Convenience wrapper around [`Resolvent`] with the default tolerance.
pub fn resolvent(lambda: f64, g: &Field, phi: NonlinearityPhi, s: f64) -> Result<Field> {
    let solver = Resolvent::new(g.grid(), s, 1e-11, 60)?;
    Ok(solver.solve(lambda, g, phi, None)?.field)
}

/// Marches one implicit step for a fixed problem.
#[derive(Clone, Debug)]
pub struct Stepper {
    params: Params,
    phi: NonlinearityPhi,
    resolvent: Resolvent,
}

impl Stepper {
    pub fn new(params: &Params, grid: &Grid) -> Result<Self> {
        params.validate()?;
        Ok(Stepper {
            params: params.clone(),
            phi: NonlinearityPhi::new(params.m)?,
            resolvent: Resolvent::new(grid, params.s, params.newton_tol, params.newton_max_iter)?,
        })
    }

    pub fn phi(&self) -> NonlinearityPhi {
        self.phi
    }

    pub fn resolvent(&self) -> &Resolvent {
        &self.resolvent
    }

    /// Solves `diag W_j + L phi(W_j) = sum_i w_i W_i + tail W_0 + f_j` for the
    /// next index `j = history.len()`.
    pub fn step(&self, history: &History, forcing: Option<&Field>) -> Result<StepResult> {
        let j = history.len();
        let weights = marchaud_weights(&self.params, j)?;
        let mut rhs = memory_sum(history, &weights)?;
        if let Some(f) = forcing {
            rhs = rhs.axpy(1.0, f)?;
        }
        let g = rhs.scale(1.0 / weights.diag);
        let guess = history.field(j - 1);
        self.resolvent.solve(1.0 / weights.diag, &g, self.phi, Some(guess))
    }
}

/// Runs all `k` steps. `forcing`, when present, holds `f_1 .. f_k`.
pub fn solve(params: &Params, initial: &Field, forcing: Option<Vec<Field>>) -> Result<History> {
    let stepper = Stepper::new(params, initial.grid())?;
    let mut history = History::new(params.clone(), initial.clone())?;
    if let Some(f) = forcing {
        if !f.is_empty() {
            history = history.with_forcing(f)?;
        }
    }
    for j in 1..=params.k {
        let result = stepper
            .step(&history, history.forcing_at(j))
            .map_err(|e| Error::StepFailed { step: j, source: Box::new(e) })?;
        history.push_stats(result.stats());
        history.push(result.field)?;
    }
    Ok(history)
}
