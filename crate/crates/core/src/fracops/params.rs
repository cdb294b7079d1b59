use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the memory integral of the Marchaud derivative is discretized on the
/// uniform step history.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoryRule {
    /// Kernel integrated exactly against the piecewise-linear interpolant of
    /// the history. Reduces to backward Euler as `gamma -> 1`.
    #[default]
    ProductLinear,
    /// Kernel sampled at the history nodes, `gamma eps (eps (j - i))^(-1-gamma)`,
    /// with the constant extension before `a` summed in closed form.
    PointSample,
}

/// Scalar problem constants. The step length is always derived from
/// `(t_final - a) / k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    pub gamma: f64,
    pub s: f64,
    pub m: f64,
    #[serde(default)]
    pub a: f64,
    pub t_final: f64,
    pub k: usize,
    #[serde(default = "default_newton_tol")]
    pub newton_tol: f64,
    #[serde(default = "default_newton_max_iter")]
    pub newton_max_iter: usize,
    #[serde(default)]
    pub memory_rule: MemoryRule,
}

fn default_newton_tol() -> f64 {
    1e-11
}

fn default_newton_max_iter() -> usize {
    60
}

impl Params {
    pub fn new(gamma: f64, s: f64, m: f64, a: f64, t_final: f64, k: usize) -> Result<Self> {
        let p = Params {
            gamma,
            s,
            m,
            a,
            t_final,
            k,
            newton_tol: default_newton_tol(),
            newton_max_iter: default_newton_max_iter(),
            memory_rule: MemoryRule::default(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_rule(mut self, rule: MemoryRule) -> Self {
        self.memory_rule = rule;
        self
    }

    pub fn with_steps(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma must lie in (0, 1), got {}", self.gamma));
        }
        if !(self.s > 0.0 && self.s < 1.0) {
            return bad(format!("s must lie in (0, 1), got {}", self.s));
        }
        if !(self.m > 0.0 && self.m.is_finite()) {
            return bad(format!("m must be positive, got {}", self.m));
        }
        if !(self.a.is_finite() && self.t_final.is_finite() && self.t_final > self.a) {
            return bad(format!("need t_final > a, got a = {}, t_final = {}", self.a, self.t_final));
        }
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if !(self.newton_tol > 0.0) || self.newton_max_iter == 0 {
            return bad("newton tolerance and iteration budget must be positive".into());
        }
        Ok(())
    }

    pub fn eps(&self) -> f64 {
        (self.t_final - self.a) / self.k as f64
    }

    /// Time of history index `j`; exact at `j = k`.
    pub fn time(&self, j: usize) -> f64 {
        if j == self.k {
            self.t_final
        } else {
            self.a + (self.t_final - self.a) * j as f64 / self.k as f64
        }
    }

    /// Critical exponent `m* = (gamma N - 2 s) / (gamma N)` of the existence theory.
    pub fn m_star(&self, dim: usize) -> f64 {
        let gn = self.gamma * dim as f64;
        (gn - 2.0 * self.s) / gn
    }

    /// Whether `m > m*` and `N > 2 s / gamma` hold for this dimension.
    pub fn existence_conditions(&self, dim: usize) -> (bool, bool) {
        (self.m > self.m_star(dim), dim as f64 > 2.0 * self.s / self.gamma)
    }
}

/// Two-sided bounds `lambda1 / (t - tau)^(1+gamma) <= K(t, tau) <= lambda2 / (t - tau)^(1+gamma)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeKernelBounds {
    pub lambda1: f64,
    pub lambda2: f64,
}

impl TimeKernelBounds {
    pub fn new(lambda1: f64, lambda2: f64) -> Result<Self> {
        if !(lambda1 > 0.0 && lambda2 >= lambda1) {
            return Err(Error::InvalidParams(format!(
                "time kernel bounds need 0 < lambda1 <= lambda2, got {lambda1}, {lambda2}"
            )));
        }
        Ok(TimeKernelBounds { lambda1, lambda2 })
    }
}

/// Ellipticity of a spatial kernel: `Lambda^(-1/2) |x-y|^(-N-2s)` from below
/// on `|x - y| <= cutoff`, `Lambda^(1/2) |x-y|^(-N-2s)` from above everywhere.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpaceKernelBounds {
    pub lambda: f64,
    pub cutoff: f64,
}

impl SpaceKernelBounds {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParams(format!("ellipticity must be positive, got {lambda}")));
        }
        Ok(SpaceKernelBounds { lambda, cutoff: 3.0 })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eps_times_k_is_interval() {
        let p = Params::new(0.5, 0.5, 2.0, 0.3, 1.7, 7).unwrap();
        assert!((p.eps() * 7.0 - 1.4).abs() < 1e-14);
        assert_eq!(p.time(7), 1.7);
        assert_eq!(p.time(0), 0.3);
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(Params::new(1.0, 0.5, 2.0, 0.0, 1.0, 4).is_err());
        assert!(Params::new(0.5, 0.0, 2.0, 0.0, 1.0, 4).is_err());
        assert!(Params::new(0.5, 0.5, 0.0, 0.0, 1.0, 4).is_err());
        assert!(Params::new(0.5, 0.5, 2.0, 1.0, 1.0, 4).is_err());
        assert!(Params::new(0.5, 0.5, 2.0, 0.0, 1.0, 0).is_err());
        assert!(TimeKernelBounds::new(2.0, 1.0).is_err());
        assert!(SpaceKernelBounds::new(0.0).is_err());
    }

    #[test]
    fn existence_flags() {
        let p = Params::new(0.5, 0.5, 2.0, 0.0, 1.0, 4).unwrap();
        // N = 1: m* = (0.5 - 1) / 0.5 = -1, and N > 2 s / gamma = 2 fails
        assert_eq!(p.m_star(1), -1.0);
        assert_eq!(p.existence_conditions(1), (true, false));
        assert_eq!(p.existence_conditions(2), (true, false));
    }
}
