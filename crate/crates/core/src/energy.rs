//! Norms, bilinear forms, barriers and the truncated energies of the De
//! Giorgi argument, all evaluated on stored trajectories.
//!
//! The energy statements are phrased for the variable `w = phi(W)`, where `W`
//! is what the stepper stores, so that `theta(w) = W` is the quantity under
//! the time derivative.

use rustfft::num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fracops::History;
use crate::grid::{self, Field, Grid};
use crate::quad::adaptive_simpson;
use crate::stepper::NonlinearityPhi;

/// Multipliers `|xi_k|^{2s}` together with the mode coefficients of a field.
#[derive(Clone, Debug)]
pub struct SpectralData {
    pub multipliers: Vec<f64>,
    pub coeffs: Vec<Complex64>,
    /// `cell_volume / n^N`, turning coefficient sums into integrals.
    pub weight: f64,
}

impl SpectralData {
    pub fn new(field: &Field, s: f64) -> Self {
        let grid = field.grid();
        let multipliers = (0..grid.len())
            .map(|k| {
                let x2 = grid.xi_norm_sq(k);
                if x2 == 0.0 {
                    0.0
                } else {
                    x2.powf(s)
                }
            })
            .collect();
        SpectralData {
            multipliers,
            coeffs: grid::transform(field).coeffs().to_vec(),
            weight: grid.cell_volume() / grid.len() as f64,
        }
    }
}

/// `E(f, g) = sum_k |xi_k|^{2s} Re(f_k conj(g_k)) * cell_volume / n^N`,
/// which equals `integrate(g * (-Delta)^s f)`.
pub fn bilinear_form(f: &Field, g: &Field, s: f64) -> Result<f64> {
    if f.grid() != g.grid() {
        return Err(Error::GridMismatch);
    }
    let a = SpectralData::new(f, s);
    let b = grid::transform(g);
    Ok(a.multipliers.iter().zip(&a.coeffs).zip(b.coeffs()).map(|((m, x), y)| m * (x * y.conj()).re).sum::<f64>()
        * a.weight)
}

/// `(sum_k lambda_k |f_k|^2)^{1/2}`.
pub fn h_norm(f: &Field, s: f64) -> f64 {
    let d = SpectralData::new(f, s);
    (d.multipliers.iter().zip(&d.coeffs).map(|(m, c)| m * c.norm_sqr()).sum::<f64>() * d.weight).sqrt()
}

/// `(sum_{k != 0} lambda_k^{-1} |f_k|^2)^{1/2}`, defined on zero-mean fields.
pub fn h_star_norm(f: &Field, s: f64) -> Result<f64> {
    let mean = f.mean();
    if mean.abs() > 1e-10 {
        return Err(Error::NonZeroMean { mean });
    }
    let d = SpectralData::new(f, s);
    Ok((d.multipliers.iter().zip(&d.coeffs).filter(|(m, _)| **m > 0.0).map(|(m, c)| c.norm_sqr() / m).sum::<f64>()
        * d.weight)
        .sqrt())
}

/// `psi_L(t, x) = L + (|t|^{gamma/2} - 1)_+ + (|x|^{s/2} - 1)_+`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Barrier {
    pub level: f64,
    pub gamma: f64,
    pub s: f64,
}

impl Barrier {
    pub fn new(level: f64, gamma: f64, s: f64) -> Result<Self> {
        if !(level >= 0.0) {
            return Err(Error::InvalidParams(format!("barrier level must be nonnegative, got {level}")));
        }
        Ok(Barrier { level, gamma, s })
    }

    pub fn eval(&self, t: f64, r: f64) -> f64 {
        self.level + (t.abs().powf(self.gamma / 2.0) - 1.0).max(0.0) + (r.powf(self.s / 2.0) - 1.0).max(0.0)
    }

    /// Barrier sampled on the grid at (remapped) time `t`, with `x` measured
    /// from `centre` in the periodic metric.
    pub fn field(&self, grid: &Grid, t: f64, centre: [f64; 2]) -> Field {
        let values = (0..grid.len()).map(|i| self.eval(t, grid.periodic_distance(grid.coords(i), centre))).collect();
        Field::from_raw(grid, values)
    }
}

/// Length of the reference window `[-2, 0]` onto which a run is mapped.
pub const WINDOW: f64 = 2.0;

/// Affine map of a run's time axis onto `[-WINDOW, 0]`.
pub fn remap_time(history: &History, j: usize) -> f64 {
    let p = history.params();
    (history.time(j) - p.t_final) / (p.t_final - p.a) * WINDOW
}

/// Centre of the periodic cell.
pub fn domain_centre(grid: &Grid) -> [f64; 2] {
    let c = 0.5 * grid.length();
    if grid.dim() == 1 {
        [c, 0.0]
    } else {
        [c, c]
    }
}

/// `B(w) = int_0^{(w - psi)_+} theta'(tau + psi) tau dtau`, adaptive Simpson to
/// relative accuracy `1e-8`.
pub fn b_functional(w: f64, psi: f64, phi: NonlinearityPhi) -> f64 {
    let v = w - psi;
    if v <= 0.0 {
        return 0.0;
    }
    if phi.m() == 1.0 {
        return 0.5 * v * v;
    }
    if phi.m() > 1.0 && psi <= 0.0 {
        // theta' blows up at 0; substitute tau = v u^m so the integrand is smooth
        let m = phi.m();
        return adaptive_simpson(
            |u| {
                if u <= 0.0 {
                    return 0.0;
                }
                let tau = v * u.powf(m);
                phi.dtheta(tau + psi) * tau * v * m * u.powf(m - 1.0)
            },
            0.0,
            1.0,
            1e-10,
        );
    }
    adaptive_simpson(|tau| phi.dtheta(tau + psi) * tau, 0.0, v, 1e-10)
}

/// `Lambda_1 = inf theta' / 2` and `Lambda_2 = theta(M) - theta(l)` over `[l, M]`.
pub fn theta_bounds(phi: NonlinearityPhi, lo: f64, hi: f64) -> (f64, f64) {
    // theta' is monotone on each side of zero, so the infimum sits at an endpoint
    // unless the range straddles the origin, where theta'(0) is 0 or infinite.
    let ends = phi.dtheta(lo).min(phi.dtheta(hi));
    let inf = if lo < 0.0 && hi > 0.0 { ends.min(phi.dtheta(0.0)) } else { ends };
    (0.5 * inf, phi.theta(hi) - phi.theta(lo))
}

/// Every term of the energy inequality between steps `j1` and `j2`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnergyReport {
    pub j1: usize,
    pub j2: usize,
    pub level: f64,
    pub b_initial: f64,
    pub b_final: f64,
    pub dissipation: f64,
    pub forcing_term: f64,
    pub lower_order: f64,
    pub constant: f64,
    pub slack: f64,
    pub lambda1_theta: f64,
    pub lambda2_theta: f64,
    /// Sampled violations of `Lambda_1 v^2 <= B <= Lambda_2 v`.
    pub b_bound_violations: usize,
}

/// Assembles
///
/// ```text
/// int B(t_j2) + sum eps E(v_j, v_j)
///   <= int B(t_j1) + sum eps int v_j f_j + C sum eps (int v_j + |{v_j > 0}|)
/// ```
///
/// with `v_j = (w_j - psi_L)_+`, sums over `j1 < j <= j2`, and `C = 1 + Lambda_2`.
pub fn energy_inequality_check(history: &History, barrier: &Barrier, j1: usize, j2: usize) -> Result<EnergyReport> {
    if j1 >= j2 || j2 >= history.len() {
        return Err(Error::OutOfRange(format!(
            "need 0 <= j1 < j2 <= {}, got ({j1}, {j2})",
            history.len().saturating_sub(1)
        )));
    }
    let p = history.params();
    let phi = NonlinearityPhi::new(p.m)?;
    let grid = history.grid();
    let centre = domain_centre(grid);
    let eps = p.eps();
    let dv = grid.cell_volume();

    let w_at = |j: usize| phi.apply(history.field(j));
    let psi_at = |j: usize| barrier.field(grid, remap_time(history, j), centre);

    // range of tau + psi over the window where w >= psi
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for j in j1..=j2 {
        let w = w_at(j);
        let psi = psi_at(j);
        for (&wi, &pi) in w.values().iter().zip(psi.values()) {
            if wi >= pi {
                lo = lo.min(pi);
                hi = hi.max(wi);
            }
        }
    }
    let (lambda1, lambda2) = if lo.is_finite() { theta_bounds(phi, lo, hi) } else { (0.0, 0.0) };
    let constant = 1.0 + lambda2;

    let mut violations = 0;
    let b_integral = |j: usize, violations: &mut usize| -> f64 {
        let w = w_at(j);
        let psi = psi_at(j);
        w.values()
            .iter()
            .zip(psi.values())
            .map(|(&wi, &pi)| {
                let b = b_functional(wi, pi, phi);
                let v = (wi - pi).max(0.0);
                if v > 0.0 {
                    let tol = 1e-8 * b.max(1e-300);
                    if lambda1 * v * v > b + tol || b > lambda2 * v + tol {
                        *violations += 1;
                    }
                }
                b
            })
            .sum::<f64>()
            * dv
    };
    let b_initial = b_integral(j1, &mut violations);
    let b_final = b_integral(j2, &mut violations);

    let mut dissipation = 0.0;
    let mut forcing_term = 0.0;
    let mut lower = 0.0;
    for j in (j1 + 1)..=j2 {
        let v = w_at(j).zip_map(&psi_at(j), |w, psi| (w - psi).max(0.0))?;
        dissipation += eps * bilinear_form(&v, &v, p.s)?;
        if let Some(f) = history.forcing_at(j) {
            forcing_term += eps * v.dot(f)?;
        }
        let support = v.values().iter().filter(|&&x| x > 0.0).count() as f64 * dv;
        lower += eps * (grid::integrate(&v) + support);
    }
    let lower_order = constant * lower;
    let slack = b_initial + forcing_term + lower_order - b_final - dissipation;
    Ok(EnergyReport {
        j1,
        j2,
        level: barrier.level,
        b_initial,
        b_final,
        dissipation,
        forcing_term,
        lower_order,
        constant,
        slack,
        lambda1_theta: lambda1,
        lambda2_theta: lambda2,
        b_bound_violations: violations,
    })
}

/// Truncated energies `U_k` on the levels `T_k`, `L_k`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DeGiorgiReport {
    /// `U_k` with the exponent `3 - gamma` in the pointwise term.
    pub u: Vec<f64>,
    /// The same energies with the quadratic pointwise term.
    pub u_quadratic: Vec<f64>,
    pub t_levels: Vec<f64>,
    pub l_levels: Vec<f64>,
    pub p_star: f64,
    /// Surrogate for the smallness threshold: `int int (w - psi_0)_+^2` over the window.
    pub sigma0_used: f64,
    pub converged: bool,
}

impl DeGiorgiReport {
    /// Strictly decreasing while positive; once an energy vanishes all later
    /// ones must vanish too.
    pub fn decreasing_from(&self, first: usize) -> bool {
        self.u[first..].windows(2).all(|w| if w[0] > 0.0 { w[1] < w[0] } else { w[1] == 0.0 })
    }
}

/// `p* = (s + gamma N) / ((1 - gamma) s + gamma N)`.
pub fn p_star(s: f64, gamma: f64, dim: usize) -> f64 {
    let gn = gamma * dim as f64;
    (s + gn) / ((1.0 - gamma) * s + gn)
}

pub fn level_time(k: usize) -> f64 {
    -(1.0 + 0.5f64.powi(k as i32))
}

pub fn level_height(k: usize) -> f64 {
    0.5 * (1.0 - 0.5f64.powi(k as i32))
}

/// Steps whose remapped time lies in `[T_k, 0]`.
fn window_steps(history: &History, t_k: f64) -> Vec<usize> {
    (0..history.len()).filter(|&j| remap_time(history, j) >= t_k - 1e-12).collect()
}

/// `U_k = sup_t int v_k^{3-gamma} + int_{T_k}^0 E(v_k, v_k) dt` with
/// `v_k = (w - psi_{L_k})_+`, for `k = 0 ..= k_max`.
pub fn truncation_energies(history: &History, k_max: usize) -> Result<DeGiorgiReport> {
    if !history.is_complete() {
        return Err(Error::HistoryTooShort { needed: history.params().k, have: history.len() });
    }
    if remap_time(history, 0) > level_time(1) {
        return Err(Error::OutOfRange("history does not cover the truncation window".into()));
    }
    let p = history.params();
    let phi = NonlinearityPhi::new(p.m)?;
    let grid = history.grid();
    let centre = domain_centre(grid);
    let dv = grid.cell_volume();
    let time_scale = WINDOW / (p.t_final - p.a);
    let dt = p.eps() * time_scale;
    let exponent = 3.0 - p.gamma;

    let w: Vec<Field> = history.fields().iter().map(|f| phi.apply(f)).collect();
    let mut u = Vec::with_capacity(k_max + 1);
    let mut u_quadratic = Vec::with_capacity(k_max + 1);
    let mut t_levels = Vec::with_capacity(k_max + 1);
    let mut l_levels = Vec::with_capacity(k_max + 1);
    for k in 0..=k_max {
        let t_k = level_time(k);
        let barrier = Barrier::new(level_height(k), p.gamma, p.s)?;
        let mut sup_power = 0.0f64;
        let mut sup_square = 0.0f64;
        let mut dissipation = 0.0;
        for j in window_steps(history, t_k) {
            let t = remap_time(history, j);
            let psi = barrier.field(grid, t, centre);
            let v = w[j].zip_map(&psi, |a, b| (a - b).max(0.0))?;
            sup_power = sup_power.max(v.values().iter().map(|x| x.powf(exponent)).sum::<f64>() * dv);
            sup_square = sup_square.max(v.values().iter().map(|x| x * x).sum::<f64>() * dv);
            // right-endpoint rule for the time integral; the first node only opens the window
            if t > t_k + 1e-12 {
                dissipation += dt * bilinear_form(&v, &v, p.s)?;
            }
        }
        u.push(sup_power + dissipation);
        u_quadratic.push(sup_square + dissipation);
        t_levels.push(t_k);
        l_levels.push(level_height(k));
    }
    // smallness surrogate over the whole window with the base barrier
    let base = Barrier::new(0.0, p.gamma, p.s)?;
    let mut sigma0_used = 0.0;
    for (j, wj) in w.iter().enumerate().skip(1) {
        let psi = base.field(grid, remap_time(history, j), centre);
        let v = wj.zip_map(&psi, |a, b| (a - b).max(0.0))?;
        sigma0_used += dt * v.values().iter().map(|x| x * x).sum::<f64>() * dv;
    }
    let converged = u[k_max] <= 1e-6 * u[0];
    Ok(DeGiorgiReport {
        u,
        u_quadratic,
        t_levels,
        l_levels,
        p_star: p_star(p.s, p.gamma, grid.dim()),
        sigma0_used,
        converged,
    })
}

/// Both sides of the level-set inequality
/// `int_{Q_{k-1}} (w - psi_{L_k})_+^2 <= 2^{(k+1)(p* - 2)} int_{Q_{k-1}} (w - psi_{L_{k-1}})_+^{p*}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelInequality {
    pub k: usize,
    pub lhs: f64,
    pub rhs: f64,
}

pub fn chebyshev_levels(history: &History, k_max: usize) -> Result<Vec<LevelInequality>> {
    let p = history.params();
    let phi = NonlinearityPhi::new(p.m)?;
    let grid = history.grid();
    let centre = domain_centre(grid);
    let dv = grid.cell_volume();
    let dt = p.eps() * WINDOW / (p.t_final - p.a);
    let ps = p_star(p.s, p.gamma, grid.dim());
    let mut out = Vec::new();
    for k in 1..=k_max {
        let t_prev = level_time(k - 1);
        let upper = Barrier::new(level_height(k), p.gamma, p.s)?;
        let lower = Barrier::new(level_height(k - 1), p.gamma, p.s)?;
        let (mut lhs, mut rhs) = (0.0, 0.0);
        for j in window_steps(history, t_prev).into_iter().filter(|&j| j > 0) {
            let t = remap_time(history, j);
            let w = phi.apply(history.field(j));
            let a = w.zip_map(&upper.field(grid, t, centre), |x, b| (x - b).max(0.0))?;
            let b = w.zip_map(&lower.field(grid, t, centre), |x, b| (x - b).max(0.0))?;
            lhs += dt * a.values().iter().map(|x| x * x).sum::<f64>() * dv;
            rhs += dt * b.values().iter().map(|x| x.powf(ps)).sum::<f64>() * dv;
        }
        let factor = 2f64.powf((k as f64 + 1.0) * (ps - 2.0));
        out.push(LevelInequality { k, lhs, rhs: factor * rhs });
    }
    Ok(out)
}

/// Discrete Steklov average `v^h_j = (1/q) sum_{i=j}^{j+q-1} v_i` for
/// `h = q eps`; the output is `q - 1` entries shorter than the input.
pub fn steklov(series: &[Field], eps: f64, h: f64) -> Result<Vec<Field>> {
    let q = (h / eps).round();
    if !(q >= 1.0) || (q * eps - h).abs() > 1e-12 * h.abs().max(eps) {
        return Err(Error::InvalidParams(format!("window {h} is not a positive multiple of the step {eps}")));
    }
    let q = q as usize;
    if series.len() < q {
        return Err(Error::HistoryTooShort { needed: q, have: series.len() });
    }
    let grid = series[0].grid();
    let n = grid.len();
    let mut out = Vec::with_capacity(series.len() + 1 - q);
    for j in 0..=(series.len() - q) {
        let mut acc = vec![0.0; n];
        for f in &series[j..j + q] {
            if f.grid() != grid {
                return Err(Error::GridMismatch);
            }
            acc.iter_mut().zip(f.values()).for_each(|(a, v)| *a += v);
        }
        out.push(Field::from_raw(grid, acc.into_iter().map(|a| a / q as f64).collect()));
    }
    Ok(out)
}

/// Largest deviation in `d/dt v^h = (v(t + h) - v(t)) / h`, both sides formed
/// with forward differences on the lattice.
pub fn steklov_identity_defect(series: &[Field], eps: f64, h: f64) -> Result<f64> {
    let avg = steklov(series, eps, h)?;
    let q = (h / eps).round() as usize;
    let mut worst = 0.0f64;
    for j in 0..avg.len().saturating_sub(1) {
        for x in 0..avg[j].len() {
            let lhs = (avg[j + 1].values()[x] - avg[j].values()[x]) / eps;
            let rhs = (series[j + q].values()[x] - series[j].values()[x]) / h;
            worst = worst.max((lhs - rhs).abs());
        }
    }
    Ok(worst)
}
