//! Discrete Marchaud derivative on a uniform step history.
//!
//! Every rule used here has the same shape: at step `j`
//!
//! ```text
//! D W_j = diag * W_j - sum_{i=1}^{j-1} weights[i] * W_i - tail * W_0
//! ```
//!
//! with strictly positive `weights` and `tail`, and `diag` equal to their
//! sum, so constants are annihilated and the memory term is a positive
//! combination of the past.

use statrs::function::gamma::gamma as gamma_fn;

use super::params::{MemoryRule, Params, TimeKernelBounds};
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::quad::CompositeRule;

/// Weights of the discrete derivative at one step. `weights` has length `j`
/// and is indexed like the history; entry 0 is zero because index 0 is
/// carried by `tail`.
#[derive(Clone, Debug, PartialEq)]
pub struct MemoryWeights {
    pub weights: Vec<f64>,
    pub tail: f64,
    pub diag: f64,
}

/// Per-step statistics of the nonlinear solve.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepStats {
    pub iterations: usize,
    pub residual: f64,
    pub used_fallback: bool,
}

/// Uniform-step trajectory: index `j` holds `w(a + eps j)`, index 0 the datum.
#[derive(Clone, Debug)]
pub struct History {
    params: Params,
    grid: Grid,
    fields: Vec<Field>,
    forcing: Option<Vec<Field>>,
    stats: Vec<StepStats>,
}

impl History {
    pub fn new(params: Params, initial: Field) -> Result<Self> {
        params.validate()?;
        let grid = initial.grid().clone();
        Ok(History { params, grid, fields: vec![initial], forcing: None, stats: Vec::new() })
    }

    /// Attaches forcing samples `f_1 .. f_k`; `forcing[j - 1]` is used at step `j`.
    pub fn with_forcing(mut self, forcing: Vec<Field>) -> Result<Self> {
        if forcing.len() != self.params.k {
            return Err(Error::InvalidParams(format!("forcing needs {} steps, got {}", self.params.k, forcing.len())));
        }
        for f in &forcing {
            if f.grid() != &self.grid {
                return Err(Error::GridMismatch);
            }
        }
        self.forcing = Some(forcing);
        Ok(self)
    }

    /// Builds a complete history from stored fields, e.g. a snapshot file.
    pub fn from_fields(params: Params, fields: Vec<Field>) -> Result<Self> {
        let mut iter = fields.into_iter();
        let first = iter.next().ok_or(Error::HistoryTooShort { needed: 0, have: 0 })?;
        let mut h = History::new(params, first)?;
        for f in iter {
            h.push(f)?;
        }
        Ok(h)
    }

    pub fn push(&mut self, field: Field) -> Result<()> {
        if field.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        if self.fields.len() > self.params.k {
            return Err(Error::StepIndex { j: self.fields.len(), k: self.params.k });
        }
        self.fields.push(field);
        Ok(())
    }

    pub(crate) fn push_stats(&mut self, stats: StepStats) {
        self.stats.push(stats);
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn fields(&self) -> &[Field] {
        &self.fields
    }

    pub fn field(&self, j: usize) -> &Field {
        &self.fields[j]
    }

    /// Number of stored entries (`j_cur + 1`).
    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn is_complete(&self) -> bool {
        self.fields.len() == self.params.k + 1
    }

    pub fn time(&self, j: usize) -> f64 {
        self.params.time(j)
    }

    /// Forcing at step `j >= 1`, `None` when the run is unforced.
    pub fn forcing_at(&self, j: usize) -> Option<&Field> {
        self.forcing.as_ref().map(|f| &f[j - 1])
    }

    pub fn forcing(&self) -> Option<&[Field]> {
        self.forcing.as_deref()
    }

    pub fn stats(&self) -> &[StepStats] {
        &self.stats
    }
}

/// `b_n = (n+1)^p - n^p` without cancellation.
fn increment(p: f64, n: usize) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let x = n as f64;
    x.powf(p) * (p * (1.0 / x).ln_1p()).exp_m1()
}

/// `b_{n-1} - b_n = 2 n^p - (n+1)^p - (n-1)^p` for `n >= 1`.
fn second_difference(p: f64, n: usize) -> f64 {
    if n < 4 {
        let x = n as f64;
        return 2.0 * x.powf(p) - (x + 1.0).powf(p) - (x - 1.0).powf(p);
    }
    // (1+x)^p + (1-x)^p - 2 = 2 sum_{k>=1} C(p, 2k) x^{2k}
    let x = 1.0 / n as f64;
    let x2 = x * x;
    let mut coeff = p * (p - 1.0) / 2.0;
    let mut power = x2;
    let mut sum = 0.0;
    let mut k = 1.0;
    loop {
        let term = coeff * power;
        sum += term;
        if term.abs() <= 1e-18 * sum.abs() || k > 60.0 {
            break;
        }
        coeff *= (p - 2.0 * k) * (p - 2.0 * k - 1.0) / ((2.0 * k + 1.0) * (2.0 * k + 2.0));
        power *= x2;
        k += 1.0;
    }
    -(n as f64).powf(p) * 2.0 * sum
}

/// Memory weights at step `j` (`1 <= j <= k`).
pub fn marchaud_weights(params: &Params, j: usize) -> Result<MemoryWeights> {
    if j == 0 || j > params.k {
        return Err(Error::StepIndex { j, k: params.k });
    }
    let gamma = params.gamma;
    let eps = params.eps();
    let mut weights = vec![0.0; j];
    let tail;
    match params.memory_rule {
        MemoryRule::PointSample => {
            let c = 1.0 / gamma_fn(1.0 - gamma);
            for (i, w) in weights.iter_mut().enumerate().skip(1) {
                *w = gamma * c * eps * (eps * (j - i) as f64).powf(-1.0 - gamma);
            }
            tail = c * (eps * j as f64).powf(-gamma);
        }
        MemoryRule::ProductLinear => {
            let p = 1.0 - gamma;
            let c = eps.powf(-gamma) / gamma_fn(2.0 - gamma);
            for (i, w) in weights.iter_mut().enumerate().skip(1) {
                *w = c * second_difference(p, j - i);
            }
            tail = c * increment(p, j - 1);
        }
    }
    let diag = weights.iter().sum::<f64>() + tail;
    Ok(MemoryWeights { weights, tail, diag })
}

/// `sum_i weights[i] W_i + tail W_0`, the known part of the discrete derivative.
pub fn memory_sum(history: &History, w: &MemoryWeights) -> Result<Field> {
    let j = w.weights.len();
    if history.len() < j {
        return Err(Error::HistoryTooShort { needed: j - 1, have: history.len() });
    }
    let mut acc: Vec<f64> = history.field(0).values().iter().map(|v| w.tail * v).collect();
    for i in 1..j {
        let wi = w.weights[i];
        for (a, v) in acc.iter_mut().zip(history.field(i).values()) {
            *a += wi * v;
        }
    }
    Ok(Field::from_raw(history.grid(), acc))
}

/// Discrete Marchaud derivative of the stored history at step `j`.
pub fn marchaud_apply(history: &History, j: usize) -> Result<Field> {
    let w = marchaud_weights(history.params(), j)?;
    if history.len() <= j {
        return Err(Error::HistoryTooShort { needed: j, have: history.len() });
    }
    let memory = memory_sum(history, &w)?;
    let current = history.field(j);
    Ok(Field::from_raw(
        history.grid(),
        current.values().iter().zip(memory.values()).map(|(c, m)| w.diag * c - m).collect(),
    ))
}

/// Point-sample weights for a general time kernel `K(t, tau)`, after checking
/// the two-sided power bounds and translation invariance at the sampled pairs.
/// The tail is the quadrature of `gamma / Gamma(1-gamma) * int_{-inf}^a K(t_j, tau) dtau`.
pub fn kernel_weights(
    params: &Params,
    j: usize,
    kernel: &dyn Fn(f64, f64) -> f64,
    bounds: TimeKernelBounds,
) -> Result<MemoryWeights> {
    if j == 0 || j > params.k {
        return Err(Error::StepIndex { j, k: params.k });
    }
    let gamma = params.gamma;
    let eps = params.eps();
    let c = gamma / gamma_fn(1.0 - gamma);
    let t = params.time(j);
    let mut weights = vec![0.0; j];
    for (i, weight) in weights.iter_mut().enumerate().skip(1) {
        let tau = params.time(i);
        let value = kernel(t, tau);
        let power = (t - tau).powf(-1.0 - gamma);
        let slack = 1e-12 * power * bounds.lambda2;
        if value < bounds.lambda1 * power - slack || value > bounds.lambda2 * power + slack {
            return Err(Error::KernelTable(format!("time kernel at ({t}, {tau}) = {value} violates the power bounds")));
        }
        let lag = t - tau;
        let shifted = kernel(t + lag, t);
        let reference = kernel(t, t - lag);
        if (shifted - reference).abs() > 1e-10 * reference.abs().max(1e-300) {
            return Err(Error::KernelTable(format!("time kernel not translation invariant at lag {lag}")));
        }
        *weight = c * eps * value;
    }
    // tau = a - span (u^{-1/gamma} - 1) makes the integrand constant for the pure power kernel
    let span = t - params.a;
    let rule = CompositeRule::new(32, 16);
    let tail = c * rule.integrate(
        |u| {
            if u <= 0.0 {
                return 0.0;
            }
            let tau = params.a - span * (u.powf(-1.0 / gamma) - 1.0);
            kernel(t, tau) * span / gamma * u.powf(-1.0 / gamma - 1.0)
        },
        0.0,
        1.0,
    );
    let diag = weights.iter().sum::<f64>() + tail;
    Ok(MemoryWeights { weights, tail, diag })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(gamma: f64, eps: f64, k: usize, rule: MemoryRule) -> Params {
        Params::new(gamma, 0.5, 1.0, 0.0, eps * k as f64, k).unwrap().with_rule(rule)
    }

    fn scalar_history(p: &Params, values: &[f64]) -> History {
        let g = Grid::new(1, 8, 1.0).unwrap();
        let fields = values.iter().map(|&v| Field::constant(&g, v)).collect();
        History::from_fields(p.clone(), fields).unwrap()
    }

    #[test]
    fn rejects_step_zero() {
        let p = params(0.5, 0.1, 4, MemoryRule::PointSample);
        assert!(matches!(marchaud_weights(&p, 0), Err(Error::StepIndex { .. })));
        assert!(marchaud_weights(&p, 5).is_err());
    }

    #[test]
    fn point_rule_first_step() {
        let p = params(0.5, 0.1, 4, MemoryRule::PointSample);
        let w = marchaud_weights(&p, 1).unwrap();
        let expect = 0.1f64.powf(-0.5) / std::f64::consts::PI.sqrt();
        assert!((w.diag - expect).abs() < 1e-14 * expect);
        assert_eq!(w.diag, w.tail);
    }

    #[test]
    fn point_rule_closed_form_weights() {
        let p = params(0.3, 0.05, 10, MemoryRule::PointSample);
        let w = marchaud_weights(&p, 6).unwrap();
        let c = 1.0 / gamma_fn(0.7);
        for i in 1..6 {
            let expect = 0.3 * c * 0.05 * (0.05 * (6 - i) as f64).powf(-1.3);
            assert!((w.weights[i] - expect).abs() < 1e-13 * expect);
        }
        assert!((w.tail - c * 0.3f64.powf(-0.3)).abs() < 1e-13);
    }

    #[test]
    fn product_rule_matches_naive_differences() {
        let p = params(0.4, 0.01, 50, MemoryRule::ProductLinear);
        let w = marchaud_weights(&p, 50).unwrap();
        let c = 0.01f64.powf(-0.4) / gamma_fn(1.6);
        let b = |n: usize| ((n + 1) as f64).powf(0.6) - (n as f64).powf(0.6);
        assert!((w.diag - c).abs() < 1e-12 * c);
        for i in 1..50 {
            let n = 50 - i;
            let expect = c * (b(n - 1) - b(n));
            assert!((w.weights[i] - expect).abs() < 1e-8 * expect, "i = {i}");
        }
        assert!((w.tail - c * b(49)).abs() < 1e-12 * c);
    }

    #[test]
    fn weights_are_positive() {
        for rule in [MemoryRule::PointSample, MemoryRule::ProductLinear] {
            for gamma in [0.01, 0.3, 0.5, 0.9, 0.999] {
                let p = params(gamma, 1e-3, 400, rule);
                for j in [1, 2, 3, 57, 400] {
                    let w = marchaud_weights(&p, j).unwrap();
                    assert!(w.tail > 0.0);
                    assert!(w.weights[1..].iter().all(|&x| x > 0.0), "{rule:?} {gamma} {j}");
                    let sum: f64 = w.weights.iter().sum::<f64>() + w.tail;
                    assert!((sum - w.diag).abs() <= 1e-12 * w.diag);
                }
            }
        }
    }

    #[test]
    fn constant_history_has_zero_derivative() {
        for rule in [MemoryRule::PointSample, MemoryRule::ProductLinear] {
            let p = params(0.6, 0.1, 5, rule);
            let h = scalar_history(&p, &[2.5; 6]);
            for j in 1..=5 {
                assert!(marchaud_apply(&h, j).unwrap().sup_norm() < 1e-12);
            }
        }
    }

    #[test]
    fn two_point_jump() {
        for rule in [MemoryRule::PointSample, MemoryRule::ProductLinear] {
            let p = params(0.5, 0.1, 3, rule);
            let h = scalar_history(&p, &[0.0, 1.0]);
            let d = marchaud_apply(&h, 1).unwrap();
            let diag = marchaud_weights(&p, 1).unwrap().diag;
            assert!(d.values().iter().all(|v| (v - diag).abs() < 1e-14));
        }
    }

    #[test]
    fn product_rule_classical_limit() {
        // W_i = sin(eps i), eps = 1e-3, gamma = 0.999 against the backward difference
        let eps = 1e-3;
        let k = 1000;
        let p = params(0.999, eps, k, MemoryRule::ProductLinear);
        let values: Vec<f64> = (0..=k).map(|i| (eps * i as f64).sin()).collect();
        let h = scalar_history(&p, &values);
        let d = marchaud_apply(&h, k).unwrap().values()[0];
        let backward = (values[k] - values[k - 1]) / eps;
        assert!((d - backward).abs() <= 5e-2 * backward.abs(), "{d} vs {backward}");
    }

    #[test]
    fn point_rule_misses_classical_limit() {
        // The sampled kernel loses the mass concentrated below one step as gamma -> 1.
        let eps = 1e-3;
        let k = 1000;
        let p = params(0.999, eps, k, MemoryRule::PointSample);
        let values: Vec<f64> = (0..=k).map(|i| (eps * i as f64).sin()).collect();
        let h = scalar_history(&p, &values);
        let d = marchaud_apply(&h, k).unwrap().values()[0];
        let backward = (values[k] - values[k - 1]) / eps;
        assert!(d < 0.05 * backward);
    }

    #[test]
    fn power_history_converges_to_gamma_function() {
        // Caputo derivative of (t - a)^gamma is Gamma(1 + gamma).
        for rule in [MemoryRule::PointSample, MemoryRule::ProductLinear] {
            let gamma = 0.5;
            let target = gamma_fn(1.0 + gamma);
            let mut errors = Vec::new();
            for k in [100, 400, 1600] {
                let eps = 1.0 / k as f64;
                let p = params(gamma, eps, k, rule);
                let values: Vec<f64> = (0..=k).map(|i| (eps * i as f64).powf(gamma)).collect();
                let h = scalar_history(&p, &values);
                let d = marchaud_apply(&h, k).unwrap().values()[0];
                errors.push((d - target).abs());
            }
            assert!(errors[1] < errors[0] && errors[2] < errors[1], "{rule:?} {errors:?}");
            assert!(errors[2] < 0.05 * target);
        }
    }

    #[test]
    fn kernel_variant_reproduces_point_rule() {
        let p = params(0.4, 0.05, 20, MemoryRule::PointSample);
        let kernel = |t: f64, tau: f64| (t - tau).powf(-1.4);
        let bounds = TimeKernelBounds::new(1.0, 1.0).unwrap();
        let general = kernel_weights(&p, 12, &kernel, bounds).unwrap();
        let closed = marchaud_weights(&p, 12).unwrap();
        for i in 1..12 {
            assert!((general.weights[i] - closed.weights[i]).abs() < 1e-12 * closed.weights[i]);
        }
        assert!((general.tail - closed.tail).abs() < 1e-12 * closed.tail);
    }

    #[test]
    fn kernel_variant_rejects_bound_violation() {
        let p = params(0.4, 0.05, 20, MemoryRule::PointSample);
        let bounds = TimeKernelBounds::new(1.0, 2.0).unwrap();
        let too_big = |t: f64, tau: f64| 3.0 * (t - tau).powf(-1.4);
        assert!(matches!(kernel_weights(&p, 5, &too_big, bounds), Err(Error::KernelTable(_))));
    }
}
