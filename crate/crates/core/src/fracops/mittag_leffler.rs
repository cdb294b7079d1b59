//! Mittag-Leffler function `E_gamma(z)` on the negative real axis.
//!
//! Small arguments use the power series. Beyond that the series suffers
//! catastrophic cancellation, so we use the Laplace-type representation
//!
//! ```text
//! E_gamma(-x) = sin(gamma pi) / (gamma pi) * x * int_0^inf exp(-y^{1/gamma}) / (y^2 + 2 x y cos(gamma pi) + x^2) dy
//! ```
//!
//! valid for `0 < gamma < 1`, `x > 0`, integrated adaptively.

use std::f64::consts::PI;

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::quad::adaptive_gk_points;

const SERIES_LIMIT: f64 = 1.0;

fn series(gamma: f64, x: f64) -> f64 {
    // terms z^n / Gamma(gamma n + 1) with z = -x, summed until negligible
    let mut sum = 1.0;
    let ln_x = x.ln();
    for n in 1..4000 {
        let nf = n as f64;
        let magnitude = (nf * ln_x - ln_gamma(gamma * nf + 1.0)).exp();
        let term = if n % 2 == 1 { -magnitude } else { magnitude };
        sum += term;
        if magnitude < 1e-17 * sum.abs() && nf * gamma > 2.0 {
            break;
        }
    }
    sum
}

fn integral(gamma: f64, x: f64) -> f64 {
    let c = (gamma * PI).cos();
    let integrand = |y: f64| {
        if y <= 0.0 {
            return 0.0;
        }
        (-y.powf(1.0 / gamma)).exp() / (y * y + 2.0 * x * y * c + x * x)
    };
    // exp(-y^{1/gamma}) < 1e-300 beyond this point
    let y_max = 700f64.powf(gamma);
    let mut points = vec![0.0, y_max.min(1.0), y_max];
    if c < 0.0 {
        // the denominator is smallest near y = -x cos(gamma pi), with width ~ x sin(gamma pi)
        let peak = -x * c;
        let width = x * (gamma * PI).sin();
        for p in [peak - 4.0 * width, peak - width, peak, peak + width, peak + 4.0 * width] {
            if p > 0.0 && p < y_max {
                points.push(p);
            }
        }
    }
    points.sort_by(f64::total_cmp);
    points.dedup();
    let value = adaptive_gk_points(integrand, &points, 1e-17, 1e-13);
    (gamma * PI).sin() / (gamma * PI) * x * value
}

/// `E_gamma(z)` for `0 < gamma <= 1` and `z <= 0`.
pub fn mittag_leffler(gamma: f64, z: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::OutOfRange(format!("Mittag-Leffler order must lie in (0, 1], got {gamma}")));
    }
    if !(z <= 0.0) || !z.is_finite() {
        return Err(Error::OutOfRange(format!("Mittag-Leffler argument must be finite and <= 0, got {z}")));
    }
    if z == 0.0 {
        return Ok(1.0);
    }
    if gamma == 1.0 {
        return Ok(z.exp());
    }
    let x = -z;
    if x <= SERIES_LIMIT {
        Ok(series(gamma, x))
    } else {
        Ok(integral(gamma, x))
    }
}
