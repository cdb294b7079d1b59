//! Independent reference solutions: the modewise Mittag-Leffler solution of
//! the linear problem, a fine-step classical porous medium solver, the
//! Barenblatt profile and a definitional memory sum.

use statrs::function::gamma::gamma as gamma_fn;

use crate::error::{Error, Result};
use crate::fracops::{mittag_leffler, History, MemoryRule};
use crate::grid::{self, Field};
use crate::stepper::{NonlinearityPhi, Resolvent};

/// Tolerances shared by the acceptance suite.
pub mod tolerance {
    /// Relative L2 error of the linear run against the Mittag-Leffler solution.
    pub const LINEAR_L2: f64 = 1e-2;
    /// Relative L1 gap in the classical limit.
    pub const CLASSICAL_L1: f64 = 5e-2;
    /// Relative deviation of the fitted Barenblatt spread exponent.
    pub const SPREAD_EXPONENT: f64 = 5e-2;
    /// Slack for contraction margins in the dual norm.
    pub const H_STAR_MARGIN: f64 = 1e-8;
    /// Slack for L1 contraction and comparison.
    pub const ORDER_SLACK: f64 = 1e-10;
    /// Mass drift.
    pub const MASS: f64 = 1e-10;
    /// Energy inequality slack.
    pub const ENERGY_SLACK: f64 = 1e-8;
    /// Ratio `U_6 / U_0` required by the truncated-energy decay.
    pub const DE_GIORGI_RATIO: f64 = 1e-6;
    /// Absolute Mittag-Leffler error.
    pub const MITTAG_LEFFLER: f64 = 1e-10;
    /// Weak residual at the coarse resolution.
    pub const WEAK_RESIDUAL: f64 = 1e-3;
    /// Required relative reduction of the weak residual when `k` doubles.
    pub const WEAK_REDUCTION: f64 = 0.35;
    /// Relative stability of the fitted Holder exponent under refinement.
    pub const BETA_STABILITY: f64 = 0.2;
    /// Agreement of accelerated and direct memory sums.
    pub const MEMORY_SUM: f64 = 1e-12;
}

/// Exact solution of the linear problem (`m = 1`, `f = 0`) after time
/// `elapsed = t - a`: mode `k` decays by `E_gamma(-|xi_k|^{2s} elapsed^gamma)`.
pub fn linear_solution(g: &Field, gamma: f64, s: f64, elapsed: f64) -> Result<Field> {
    if !(elapsed >= 0.0) {
        return Err(Error::OutOfRange(format!("elapsed time must be nonnegative, got {elapsed}")));
    }
    if elapsed == 0.0 {
        return Ok(g.clone());
    }
    let grid = g.grid();
    let factors = (0..grid.len())
        .map(|k| {
            let x2 = grid.xi_norm_sq(k);
            if x2 == 0.0 {
                Ok(1.0)
            } else {
                mittag_leffler(gamma, -x2.powf(s) * elapsed.powf(gamma))
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut spectrum = grid::transform(g);
    spectrum.apply_table(&factors);
    Ok(grid::inverse(&spectrum))
}

/// Implicit Euler for `w_t = Delta(|w|^{m-1} w)` with the spectral Laplacian,
/// returning every substep from `g` at time 0 to time `t`.
pub fn classical_pme_trajectory(g: &Field, m: f64, t: f64, substeps: usize) -> Result<Vec<Field>> {
    if !(m > 0.0) || !(t > 0.0) || substeps == 0 {
        return Err(Error::InvalidParams(format!(
            "classical reference needs m > 0, t > 0, substeps > 0; got {m}, {t}, {substeps}"
        )));
    }
    let phi = NonlinearityPhi::new(m)?;
    let solver = Resolvent::new(g.grid(), 1.0, 1e-11, 80)?;
    let dt = t / substeps as f64;
    let mut out = Vec::with_capacity(substeps + 1);
    out.push(g.clone());
    for n in 0..substeps {
        let prev = &out[n];
        let next = solver
            .solve(dt, prev, phi, Some(prev))
            .map_err(|e| Error::StepFailed { step: n + 1, source: Box::new(e) })?;
        out.push(next.field);
    }
    Ok(out)
}

/// Final state of [`classical_pme_trajectory`].
pub fn classical_pme_reference(g: &Field, m: f64, t: f64, substeps: usize) -> Result<Field> {
    let mut traj = classical_pme_trajectory(g, m, t, substeps)?;
    Ok(traj.pop().expect("trajectory holds the datum"))
}

/// Barenblatt profile `t^{-alpha} (c - kappa |x|^2 t^{-2 beta})_+^{1/(m-1)}`
/// of `w_t = Delta(w^m)` in dimension `dim`, at distance `r` from its centre.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Barenblatt {
    pub m: f64,
    pub dim: usize,
    pub c: f64,
}

impl Barenblatt {
    pub fn new(m: f64, dim: usize, c: f64) -> Result<Self> {
        if !(m > 1.0) || !(c > 0.0) || dim == 0 {
            return Err(Error::InvalidParams(format!("Barenblatt needs m > 1, c > 0; got {m}, {c}")));
        }
        Ok(Barenblatt { m, dim, c })
    }

    pub fn alpha(&self) -> f64 {
        let n = self.dim as f64;
        n / (n * (self.m - 1.0) + 2.0)
    }

    /// Spread exponent `1 / (N (m - 1) + 2)`.
    pub fn beta(&self) -> f64 {
        self.alpha() / self.dim as f64
    }

    pub fn kappa(&self) -> f64 {
        self.alpha() * (self.m - 1.0) / (2.0 * self.m * self.dim as f64)
    }

    pub fn value(&self, t: f64, r: f64) -> f64 {
        let base = self.c - self.kappa() * r * r * t.powf(-2.0 * self.beta());
        if base <= 0.0 {
            0.0
        } else {
            t.powf(-self.alpha()) * base.powf(1.0 / (self.m - 1.0))
        }
    }

    /// Radius of the support at time `t`.
    pub fn support_radius(&self, t: f64) -> f64 {
        (self.c / self.kappa()).sqrt() * t.powf(self.beta())
    }

    /// Total mass, independent of time; closed form in one dimension.
    pub fn mass_1d(&self) -> f64 {
        let p = 1.0 / (self.m - 1.0);
        // int (c - kappa x^2)_+^p dx = c^{p + 1/2} kappa^{-1/2} B(1/2, p + 1)
        let beta_fn = gamma_fn(0.5) * gamma_fn(p + 1.0) / gamma_fn(p + 1.5);
        self.c.powf(p + 0.5) / self.kappa().sqrt() * beta_fn
    }
}

/// `sqrt(int |x - centre|^2 w / int w)` with the periodic distance.
pub fn second_moment_radius(field: &Field, centre: [f64; 2]) -> f64 {
    let grid = field.grid();
    let (num, den) = field.values().iter().enumerate().fold((0.0, 0.0), |(n, d), (i, &w)| {
        let r = grid.periodic_distance(grid.coords(i), centre);
        (n + r * r * w, d + w)
    });
    (num / den).sqrt()
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> =
        x.iter().zip(y).filter(|(a, b)| **a > 0.0 && **b > 0.0).map(|(a, b)| (a.ln(), b.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Direct evaluation of the discrete Marchaud derivative at step `j`, with
/// every weight written out from its defining formula.
pub fn dense_marchaud(history: &History, j: usize) -> Result<Field> {
    let p = history.params();
    if j == 0 || j > p.k {
        return Err(Error::StepIndex { j, k: p.k });
    }
    if history.len() <= j {
        return Err(Error::HistoryTooShort { needed: j, have: history.len() });
    }
    let gamma = p.gamma;
    let eps = p.eps();
    let weight = |i: usize| -> f64 {
        let lag = (j - i) as f64;
        match p.memory_rule {
            MemoryRule::PointSample => gamma / gamma_fn(1.0 - gamma) * eps * (eps * lag).powf(-1.0 - gamma),
            MemoryRule::ProductLinear => {
                let q = 1.0 - gamma;
                eps.powf(-gamma) / gamma_fn(2.0 - gamma)
                    * (2.0 * lag.powf(q) - (lag + 1.0).powf(q) - (lag - 1.0).powf(q))
            }
        }
    };
    let tail = match p.memory_rule {
        MemoryRule::PointSample => (eps * j as f64).powf(-gamma) / gamma_fn(1.0 - gamma),
        MemoryRule::ProductLinear => {
            let q = 1.0 - gamma;
            eps.powf(-gamma) / gamma_fn(2.0 - gamma) * ((j as f64).powf(q) - (j as f64 - 1.0).powf(q))
        }
    };
    let n = history.grid().len();
    let mut out = vec![0.0; n];
    for (x, slot) in out.iter_mut().enumerate() {
        let wj = history.field(j).values()[x];
        let mut acc = tail * (wj - history.field(0).values()[x]);
        for i in 1..j {
            acc += weight(i) * (wj - history.field(i).values()[x]);
        }
        *slot = acc;
    }
    Field::new(history.grid(), out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fracops::{marchaud_apply, Params};
    use crate::grid::{integrate, Grid};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn linear_solution_at_start_is_datum() {
        let g = Grid::new(1, 32, 2.0 * PI).unwrap();
        let f = Field::from_fn(&g, |x| x[0].sin()).unwrap();
        assert_eq!(linear_solution(&f, 0.5, 0.5, 0.0).unwrap(), f);
    }

    #[test]
    fn linear_solution_order_one_is_heat_decay() {
        let g = Grid::new(1, 32, 2.0 * PI).unwrap();
        let f = Field::from_fn(&g, |x| (2.0 * x[0]).cos() + x[0].sin()).unwrap();
        let out = linear_solution(&f, 1.0, 0.5, 0.8).unwrap();
        let expect = grid::apply_multiplier(&f, |x2| (-x2.sqrt() * 0.8).exp());
        assert!(out.sub(&expect).unwrap().sup_norm() < 1e-10);
    }

    #[test]
    fn linear_solution_half_order_amplitude() {
        let g = Grid::new(1, 32, 2.0 * PI).unwrap();
        let f = Field::from_fn(&g, |x| x[0].cos()).unwrap();
        let out = linear_solution(&f, 0.5, 0.5, 1.0).unwrap();
        let expect = std::f64::consts::E * libm::erfc(1.0);
        assert!((out.values()[0] - expect).abs() < 1e-10);
    }

    #[test]
    fn barenblatt_mass_matches_quadrature() {
        let b = Barenblatt::new(2.0, 1, 0.5).unwrap();
        // m = 2: (4/3) c^{3/2} / sqrt(kappa)
        let closed = 4.0 / 3.0 * 0.5f64.powf(1.5) / b.kappa().sqrt();
        assert!((b.mass_1d() - closed).abs() < 1e-13);
        let g = Grid::new(1, 4096, 16.0).unwrap();
        let f = Field::from_fn(&g, |x| b.value(1.0, x[0] - 8.0)).unwrap();
        assert!((integrate(&f) - closed).abs() < 1e-5);
    }

    #[test]
    fn classical_reference_conserves_mass() {
        let g = Grid::new(1, 128, 16.0).unwrap();
        let b = Barenblatt::new(2.0, 1, 0.5).unwrap();
        let f = Field::from_fn(&g, |x| b.value(1.0, x[0] - 8.0)).unwrap();
        let out = classical_pme_reference(&f, 2.0, 0.5, 50).unwrap();
        assert!((integrate(&out) - integrate(&f)).abs() < 1e-10);
    }

    #[test]
    fn dense_sum_matches_fast_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let g = Grid::new(1, 8, 1.0).unwrap();
        for trial in 0..50 {
            let rule = if trial % 2 == 0 { MemoryRule::ProductLinear } else { MemoryRule::PointSample };
            let k = rng.gen_range(1..40);
            let gamma = rng.gen_range(0.05..0.95);
            let p = Params::new(gamma, 0.5, 1.0, 0.0, rng.gen_range(0.1..3.0), k).unwrap().with_rule(rule);
            let fields =
                (0..=k).map(|_| Field::new(&g, (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()).collect();
            let h = History::from_fields(p, fields).unwrap();
            let j = rng.gen_range(1..=k);
            let a = marchaud_apply(&h, j).unwrap();
            let b = dense_marchaud(&h, j).unwrap();
            let scale = b.sup_norm().max(1e-300);
            assert!(a.sub(&b).unwrap().sup_norm() <= tolerance::MEMORY_SUM * scale, "trial {trial}");
        }
    }

    #[test]
    fn log_log_slope_of_power() {
        let x: Vec<f64> = (1..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v.powf(0.37)).collect();
        assert!((log_log_slope(&x, &y) - 0.37).abs() < 1e-12);
    }
}
