//! Cross-run properties and regularity estimators on stored trajectories.

use serde::Serialize;
use statrs::function::gamma::gamma as gamma_fn;

use crate::energy::{bilinear_form, h_star_norm};
use crate::error::{Error, Result};
use crate::fracops::History;
use crate::grid::{Field, Grid};
use crate::oracles::log_log_slope;
use crate::quad::{adaptive_gk, CompositeRule};
use crate::stepper::NonlinearityPhi;

/// Per-step contraction margins `||D_0|| - ||D_j||` of the difference of two runs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContractionReport {
    pub l1_margins: Vec<f64>,
    /// Present when the runs carry equal mass, so that differences have zero mean.
    pub h_star_margins: Option<Vec<f64>>,
    pub threshold: f64,
    pub pass: bool,
}

impl ContractionReport {
    pub fn worst_margin(&self) -> f64 {
        self.l1_margins.iter().chain(self.h_star_margins.iter().flatten()).fold(f64::INFINITY, |a, &b| a.min(b))
    }
}

pub const CONTRACTION_THRESHOLD: f64 = -1e-8;

pub fn contraction_suite(run1: &History, run2: &History) -> Result<ContractionReport> {
    if run1.grid() != run2.grid() {
        return Err(Error::Incompatible("runs live on different grids".into()));
    }
    if run1.params() != run2.params() {
        return Err(Error::Incompatible("runs use different parameters".into()));
    }
    if run1.len() != run2.len() {
        return Err(Error::Incompatible(format!("run lengths differ: {} vs {}", run1.len(), run2.len())));
    }
    let s = run1.params().s;
    let diffs: Vec<Field> = run1.fields().iter().zip(run2.fields()).map(|(a, b)| a.sub(b)).collect::<Result<_>>()?;
    let l1: Vec<f64> = diffs.iter().map(Field::l1_norm).collect();
    let l1_margins: Vec<f64> = l1.iter().map(|n| l1[0] - n).collect();
    let equal_mass = diffs.iter().all(|d| d.mean().abs() <= 1e-10);
    let h_star_margins = if equal_mass {
        let norms: Vec<f64> =
            diffs.iter().map(|d| h_star_norm(&d.add_constant(-d.mean()), s)).collect::<Result<_>>()?;
        Some(norms.iter().map(|n| norms[0] - n).collect())
    } else {
        None
    };
    let mut report = ContractionReport { l1_margins, h_star_margins, threshold: CONTRACTION_THRESHOLD, pass: false };
    report.pass = report.worst_margin() >= CONTRACTION_THRESHOLD;
    Ok(report)
}

/// Smooth time profile `sin^4(pi (t - t0) / (t1 - t0))` on `[t0, t1]`, zero elsewhere.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BumpProfile {
    pub t0: f64,
    pub t1: f64,
}

impl BumpProfile {
    pub fn new(t0: f64, t1: f64) -> Result<Self> {
        if !(t1 > t0) {
            return Err(Error::InvalidParams(format!("profile needs t0 < t1, got {t0}, {t1}")));
        }
        Ok(BumpProfile { t0, t1 })
    }

    pub fn eval(&self, t: f64) -> f64 {
        if t <= self.t0 || t >= self.t1 {
            return 0.0;
        }
        (std::f64::consts::PI * (t - self.t0) / (self.t1 - self.t0)).sin().powi(4)
    }

    fn antiderivative(&self, t: f64) -> f64 {
        let t = t.clamp(self.t0, self.t1);
        let scale = (self.t1 - self.t0) / std::f64::consts::PI;
        let u = (t - self.t0) / scale;
        scale * (3.0 * u / 8.0 - (2.0 * u).sin() / 4.0 + (4.0 * u).sin() / 32.0)
    }

    pub fn integral(&self, a: f64, b: f64) -> f64 {
        self.antiderivative(b) - self.antiderivative(a)
    }

    /// `(1/Gamma(1-gamma)) int_tau^T (t - tau)^{-gamma} chi(t) dt`, with
    /// `v = (t - tau)^{1-gamma}` removing the singularity.
    pub fn fractional_tail(&self, tau: f64, gamma: f64, rule: &CompositeRule) -> f64 {
        if tau >= self.t1 {
            return 0.0;
        }
        let q = 1.0 - gamma;
        let lo = (self.t0.max(tau) - tau).powf(q);
        let hi = (self.t1 - tau).powf(q);
        rule.integrate(|v| self.eval(tau + v.powf(1.0 / q)), lo, hi) / gamma_fn(2.0 - gamma)
    }
}

/// Spatial test function paired with a time profile.
#[derive(Clone, Debug)]
pub struct TestPair {
    pub spatial: Field,
    pub profile: BumpProfile,
}

type Shape<'a> = Box<dyn Fn(&[f64; 2]) -> f64 + 'a>;

/// Five fixed test pairs adapted to the cell: low modes, a centred and an
/// off-centre Gaussian, and a mode with nonzero mean, all under one bump in
/// the middle of `(a, t_final)`.
pub fn standard_test_pairs(grid: &Grid, a: f64, t_final: f64) -> Result<Vec<TestPair>> {
    let profile = BumpProfile::new(a + 0.25 * (t_final - a), a + 0.9 * (t_final - a))?;
    let len = grid.length();
    let wave = 2.0 * std::f64::consts::PI / len;
    let centre = 0.5 * len;
    let sq = |x: &[f64; 2], c: [f64; 2]| grid.periodic_distance(*x, c).powi(2);
    let width = len / (2.0 * std::f64::consts::PI);
    let shapes: [Shape; 5] = [
        Box::new(|x| (wave * x[0]).cos()),
        Box::new(|x| (2.0 * wave * (x[0] + x[1])).sin()),
        Box::new(|x| (-sq(x, [centre, centre]) / (width * width)).exp()),
        Box::new(|x| (-4.0 * sq(x, [0.3 * len, 0.3 * len]) / (width * width)).exp()),
        Box::new(|x| (3.0 * wave * x[0]).cos() + 0.5),
    ];
    shapes.iter().map(|f| Ok(TestPair { spatial: Field::from_fn(grid, |x| f(&x))?, profile })).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeakResidualReport {
    pub residuals: Vec<f64>,
    pub max: f64,
}

/// Residual of the weak identity
///
/// ```text
/// int int chi Phi D^gamma W + int chi E(phi(W), Phi) - int int f chi Phi
/// ```
///
/// for the piecewise-constant-in-time trajectory. The time derivative is moved
/// onto the profile: the first term equals `-sum_j (I(t_j) - I(t_{j-1})) int (W_j - W_0) Phi`.
pub fn weak_residual(history: &History, tests: &[TestPair]) -> Result<WeakResidualReport> {
    let p = history.params();
    let phi = NonlinearityPhi::new(p.m)?;
    let rule = CompositeRule::new(20, 16);
    let k = history.len() - 1;
    let w0 = history.field(0);
    let mut residuals = Vec::with_capacity(tests.len());
    let increments: Vec<Field> = (1..=k).map(|j| history.field(j).sub(w0)).collect::<Result<_>>()?;
    let fluxes: Vec<Field> = (1..=k).map(|j| phi.apply(history.field(j))).collect();
    for test in tests {
        if test.spatial.grid() != history.grid() {
            return Err(Error::GridMismatch);
        }
        let tails: Vec<f64> = (0..=k).map(|j| test.profile.fractional_tail(history.time(j), p.gamma, &rule)).collect();
        let mut r = 0.0;
        for j in 1..=k {
            let (t_prev, t_j) = (history.time(j - 1), history.time(j));
            let mass = test.profile.integral(t_prev, t_j);
            r -= (tails[j] - tails[j - 1]) * increments[j - 1].dot(&test.spatial)?;
            if mass != 0.0 {
                r += mass * bilinear_form(&fluxes[j - 1], &test.spatial, p.s)?;
                if let Some(f) = history.forcing_at(j) {
                    r -= mass * f.dot(&test.spatial)?;
                }
            }
        }
        residuals.push(r);
    }
    let max = residuals.iter().fold(0.0f64, |a, r| a.max(r.abs()));
    Ok(WeakResidualReport { residuals, max })
}

/// Caputo derivative at `tau` of `theta(sigma) = sigma^{1/m}` based at zero:
///
/// ```text
/// (1/Gamma(1-gamma)) int_0^tau theta'(sigma) (tau - sigma)^{-gamma} dsigma
/// ```
///
/// split at `tau / 2`; on the left `u = theta(sigma)` absorbs the derivative
/// singularity, on the right `r = (tau - sigma)^{1-gamma}` absorbs the kernel.
pub fn caputo_theta(phi: NonlinearityPhi, gamma: f64, tau: f64) -> f64 {
    let half = 0.5 * tau;
    let q = 1.0 - gamma;
    let left = adaptive_gk(|u| (tau - phi.phi(u)).powf(-gamma), 0.0, phi.theta(half), 1e-15, 1e-13);
    let right = adaptive_gk(|r| phi.dtheta(tau - r.powf(1.0 / q)), 0.0, half.powf(q), 1e-15, 1e-13) / q;
    (left + right) / gamma_fn(1.0 - gamma)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DeltaStar {
    pub value: f64,
    pub argmin: f64,
    pub min_derivative: f64,
    pub denominator: f64,
}

pub const DELTA_STAR_LATTICE: usize = 512;

/// `inf_{1/4 <= tau <= 2} D^gamma theta(tau) / (1 + theta(2) - theta(1/4))` on a
/// 512-point lattice.
pub fn delta_star(phi: NonlinearityPhi, gamma: f64) -> Result<DeltaStar> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidParams(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    let denominator = 1.0 + phi.theta(2.0) - phi.theta(0.25);
    let (argmin, min_derivative) = (0..DELTA_STAR_LATTICE)
        .map(|i| {
            let tau = 0.25 + 1.75 * i as f64 / (DELTA_STAR_LATTICE - 1) as f64;
            (tau, caputo_theta(phi, gamma, tau))
        })
        .fold((f64::NAN, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
    Ok(DeltaStar { value: min_derivative / denominator, argmin, min_derivative, denominator })
}

/// Oscillation of a run over shrinking space-time cylinders.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OscillationReport {
    pub zeta: f64,
    pub base_radius: f64,
    pub radii: Vec<f64>,
    pub time_radii: Vec<f64>,
    pub osc: Vec<f64>,
    /// Slope of `log osc` against `log radius`, i.e. `log kappa / log zeta`.
    pub beta_fit: f64,
    /// The same decay normalized by the time scale: `log kappa / log zeta^{s/gamma}`.
    pub beta_time_fit: f64,
    pub kappa_star_fit: f64,
    /// Levels whose cylinder spans at least two grid spacings and two time steps.
    pub resolved: Vec<bool>,
    pub levels_used: usize,
    pub degenerate: bool,
}

/// `osc[k]` = max - min of `W` over grid nodes with `|x - x_c| <= r_k` and
/// `t_c - r_k^{s / gamma} <= t <= t_c`, where `r_k = R zeta^k` and the base
/// radius `R = min(((t_c - a) / 2)^{gamma / s}, L / 4)`.
///
/// The fit skips levels below the solver tolerance floor and cylinders too
/// small to hold more than a couple of nodes in either direction.
pub fn oscillation_beta(
    history: &History,
    centre_time: f64,
    centre_x: [f64; 2],
    zeta: f64,
    k_max: usize,
) -> Result<OscillationReport> {
    if !(zeta > 0.0 && zeta < 1.0) {
        return Err(Error::OutOfRange(format!("zeta must lie in (0, 1), got {zeta}")));
    }
    if k_max < 4 {
        return Err(Error::OutOfRange(format!("need k_max >= 4, got {k_max}")));
    }
    let p = history.params();
    let grid = history.grid();
    let scale = p.s / p.gamma;
    if !(centre_time <= p.t_final + 1e-12 && centre_time > p.a) {
        return Err(Error::OutOfRange(format!(
            "cylinder centre {centre_time} outside the computed window ({}, {}]",
            p.a, p.t_final
        )));
    }
    if centre_x.iter().any(|c| !c.is_finite()) {
        return Err(Error::OutOfRange("cylinder centre must be finite".into()));
    }
    // the top cylinder spans half the elapsed time and a quarter of the cell,
    // so the estimator commutes with the parabolic rescaling of a run
    let base = (0.5 * (centre_time - p.a)).powf(1.0 / scale).min(0.25 * grid.length());
    let times: Vec<f64> = (0..history.len()).map(|j| history.time(j)).collect();
    let dist: Vec<f64> = (0..grid.len()).map(|i| grid.periodic_distance(grid.coords(i), centre_x)).collect();
    // node tolerances relative to the mesh, so relabelled runs select the same nodes
    let (tol_t, tol_x) = (1e-9 * p.eps(), 1e-9 * grid.spacing());
    let mut radii = Vec::new();
    let mut time_radii = Vec::new();
    let mut osc = Vec::new();
    for k in 0..=k_max {
        let r = base * zeta.powi(k as i32);
        let tr = r.powf(scale);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (j, &t) in times.iter().enumerate() {
            if t < centre_time - tr - tol_t || t > centre_time + tol_t {
                continue;
            }
            for (&d, &w) in dist.iter().zip(history.field(j).values()) {
                if d <= r + tol_x {
                    lo = lo.min(w);
                    hi = hi.max(w);
                }
            }
        }
        radii.push(r);
        time_radii.push(tr);
        osc.push(if hi >= lo { hi - lo } else { 0.0 });
    }
    let floor = 10.0 * p.newton_tol;
    let (h, eps) = (grid.spacing(), p.eps());
    let resolved: Vec<bool> = radii.iter().zip(&time_radii).map(|(&r, &tr)| r >= 2.0 * h && tr >= 2.0 * eps).collect();
    let used: Vec<usize> = (0..=k_max).filter(|&k| resolved[k] && osc[k] > floor).collect();
    let degenerate = used.len() < 2;
    let beta_fit = if degenerate {
        f64::NAN
    } else {
        let x: Vec<f64> = used.iter().map(|&k| radii[k]).collect();
        let y: Vec<f64> = used.iter().map(|&k| osc[k]).collect();
        log_log_slope(&x, &y)
    };
    Ok(OscillationReport {
        zeta,
        base_radius: base,
        radii,
        time_radii,
        osc,
        beta_fit,
        beta_time_fit: beta_fit / scale,
        kappa_star_fit: zeta.powf(beta_fit),
        resolved,
        levels_used: used.len(),
        degenerate,
    })
}

/// Relabels a stored run under `(t, x) -> (R^{s/gamma} t, R x)`: the states are
/// unchanged, the cell and the time axis are stretched. Forcing is not carried over.
pub fn rescaled(history: &History, factor: f64) -> Result<History> {
    if !(factor > 0.0 && factor.is_finite()) {
        return Err(Error::OutOfRange(format!("rescaling factor must be positive, got {factor}")));
    }
    let p = history.params();
    let g = history.grid();
    let stretch = factor.powf(p.s / p.gamma);
    let grid = Grid::new(g.dim(), g.n(), factor * g.length())?;
    let mut params = p.clone();
    params.a = stretch * p.a;
    params.t_final = stretch * p.t_final;
    params.validate()?;
    let fields = history.fields().iter().map(|f| Field::new(&grid, f.values().to_vec())).collect::<Result<_>>()?;
    History::from_fields(params, fields)
}

/// Fitted exponent of `sup |W(t + l) - W(t)|` against the lag `l` on `[T/2, T]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TemporalModulus {
    pub lags: Vec<f64>,
    pub increments: Vec<f64>,
    pub exponent: f64,
}

/// Temporal modulus at a fixed node, or the supremum over nodes when `node` is `None`.
pub fn temporal_holder(history: &History, node: Option<usize>) -> Result<TemporalModulus> {
    let k = history.len() - 1;
    let start = k / 2;
    if k < 8 {
        return Err(Error::HistoryTooShort { needed: 8, have: history.len() });
    }
    let eps = history.params().eps();
    let nodes: Vec<usize> = match node {
        Some(i) if i < history.grid().len() => vec![i],
        Some(i) => return Err(Error::OutOfRange(format!("node {i} outside the grid"))),
        None => (0..history.grid().len()).collect(),
    };
    let mut lags = Vec::new();
    let mut increments = Vec::new();
    let mut lag = 1;
    while lag <= (k - start) / 4 {
        let mut worst = 0.0f64;
        for j in start..=(k - lag) {
            let a = history.field(j).values();
            let b = history.field(j + lag).values();
            for &i in &nodes {
                worst = worst.max((b[i] - a[i]).abs());
            }
        }
        lags.push(lag as f64 * eps);
        increments.push(worst);
        lag *= 2;
    }
    let exponent = log_log_slope(&lags, &increments);
    Ok(TemporalModulus { lags, increments, exponent })
}
