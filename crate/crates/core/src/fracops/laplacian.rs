//! Fractional Laplacians on the periodic lattice: the exact spectral
//! multiplier `|xi|^{2s}` and a direct quadrature against a symmetric kernel.

use statrs::function::gamma::gamma as gamma_fn;

use super::params::SpaceKernelBounds;
use crate::error::{Error, Result};
use crate::grid::{self, Field, Grid};

/// Precomputed Fourier multiplier table, one entry per mode.
#[derive(Clone, Debug)]
pub struct SpectralOperator {
    grid: Grid,
    table: Vec<f64>,
}

impl SpectralOperator {
    /// Multiplier `m(|xi_k|^2)` tabulated once for the grid.
    pub fn from_multiplier(grid: &Grid, multiplier: impl Fn(f64) -> f64) -> Self {
        let table = (0..grid.len()).map(|k| multiplier(grid.xi_norm_sq(k))).collect();
        SpectralOperator { grid: grid.clone(), table }
    }

    /// `|xi|^{2 alpha}` with the zero mode sent to zero. Negative `alpha`
    /// gives the pseudo-inverse on zero-mean fields.
    pub fn power(grid: &Grid, alpha: f64) -> Self {
        Self::from_multiplier(grid, |x2| if x2 == 0.0 { 0.0 } else { x2.powf(alpha) })
    }

    pub fn frac_laplacian(grid: &Grid, s: f64) -> Self {
        Self::power(grid, s)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    /// Largest multiplier, i.e. the spectral radius.
    pub fn max_multiplier(&self) -> f64 {
        self.table.iter().copied().fold(0.0, f64::max)
    }

    /// New operator with each multiplier mapped through `f`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        SpectralOperator { grid: self.grid.clone(), table: self.table.iter().map(|&v| f(v)).collect() }
    }

    pub fn apply(&self, field: &Field) -> Result<Field> {
        if field.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        Ok(self.apply_unchecked(field))
    }

    pub(crate) fn apply_unchecked(&self, field: &Field) -> Field {
        let mut spectrum = grid::transform(field);
        spectrum.apply_table(&self.table);
        grid::inverse(&spectrum)
    }
}

fn check_order(s: f64) -> Result<()> {
    if !(s > 0.0 && s <= 1.0) {
        return Err(Error::InvalidParams(format!("fractional order must lie in (0, 1], got {s}")));
    }
    Ok(())
}

/// Spectral `(-Delta)^s` for `s` in `(0, 1]`; `s = 1` is the spectral `-Delta`.
pub fn frac_laplacian(field: &Field, s: f64) -> Result<Field> {
    check_order(s)?;
    Ok(grid::apply_multiplier(field, |x2| if x2 == 0.0 { 0.0 } else { x2.powf(s) }))
}

/// `|xi|^{2 alpha}` for any real `alpha`, zero mode removed.
pub fn fractional_power(field: &Field, alpha: f64) -> Field {
    grid::apply_multiplier(field, |x2| if x2 == 0.0 { 0.0 } else { x2.powf(alpha) })
}

/// Inverse of `(-Delta)^s` on zero-mean fields.
pub fn inverse_frac_laplacian(field: &Field, s: f64) -> Result<Field> {
    check_order(s)?;
    Ok(fractional_power(field, -s))
}

/// `C_{1,s}`, the constant making `C P.V. int (f(x) - f(y)) |x - y|^{-1-2s} dy`
/// equal to the multiplier `|xi|^{2s}` on the line.
pub fn fractional_kernel_constant(s: f64) -> f64 {
    s * 4f64.powf(s) * gamma_fn(0.5 + s) / (std::f64::consts::PI.sqrt() * gamma_fn(1.0 - s))
}

/// Hurwitz zeta `sum_{k>=0} (q + k)^{-sigma}` for `sigma > 1`, `q > 0`, by
/// Euler-Maclaurin summation.
pub fn hurwitz_zeta(sigma: f64, q: f64) -> f64 {
    // B_{2j} / (2j)!
    const B: [f64; 8] = [
        1.0 / 12.0,
        -1.0 / 720.0,
        1.0 / 30240.0,
        -1.0 / 1209600.0,
        1.0 / 47900160.0,
        -691.0 / 1307674368000.0,
        1.0 / 74724249600.0,
        -3617.0 / 10670622842880000.0,
    ];
    let terms = 12;
    let mut sum: f64 = (0..terms).map(|k| (q + k as f64).powf(-sigma)).sum();
    let a = q + terms as f64;
    sum += a.powf(1.0 - sigma) / (sigma - 1.0) + 0.5 * a.powf(-sigma);
    // rising factorial sigma (sigma + 1) ... (sigma + 2j - 2)
    let mut rising = sigma;
    let mut power = a.powf(-sigma - 1.0);
    for (j, b) in B.iter().enumerate() {
        sum += b * rising * power;
        let j2 = 2.0 * j as f64;
        rising *= (sigma + j2 + 1.0) * (sigma + j2 + 2.0);
        power /= a * a;
    }
    sum
}

/// Symmetric weights `K(x_p, x_q)` on a one-dimensional lattice, stored densely.
#[derive(Clone, Debug)]
pub struct KernelTable {
    grid: Grid,
    weights: Vec<f64>,
}

impl KernelTable {
    /// Accepts a dense row-major table after checking symmetry and finiteness
    /// off the diagonal. The diagonal is ignored.
    pub fn new(grid: &Grid, weights: Vec<f64>) -> Result<Self> {
        if grid.dim() != 1 {
            return Err(Error::KernelTable("kernel tables are supported in one dimension".into()));
        }
        let n = grid.len();
        if weights.len() != n * n {
            return Err(Error::KernelTable(format!("expected {} entries, got {}", n * n, weights.len())));
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let a = weights[p * n + q];
                let b = weights[q * n + p];
                if !a.is_finite() || !b.is_finite() {
                    return Err(Error::KernelTable(format!("non-finite weight at ({p}, {q})")));
                }
                if (a - b).abs() > 1e-13 * a.abs().max(b.abs()) {
                    return Err(Error::KernelTable(format!("asymmetric at ({p}, {q}): {a} vs {b}")));
                }
            }
        }
        Ok(KernelTable { grid: grid.clone(), weights })
    }

    pub fn from_fn(grid: &Grid, kernel: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let n = grid.len();
        let mut weights = vec![0.0; n * n];
        for p in 0..n {
            for q in 0..n {
                if p != q {
                    weights[p * n + q] = kernel(grid.coords(p)[0], grid.coords(q)[0]);
                }
            }
        }
        Self::new(grid, weights)
    }

    /// The fractional kernel `C_{1,s} |x - y|^{-1-2s}` summed over all periodic
    /// images, so that the continuous operator on the torus is exactly `|xi|^{2s}`.
    pub fn periodized_fractional(grid: &Grid, s: f64) -> Result<Self> {
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::InvalidParams(format!("kernel order must lie in (0, 1), got {s}")));
        }
        let l = grid.length();
        let sigma = 1.0 + 2.0 * s;
        let c = fractional_kernel_constant(s) * l.powf(-sigma);
        let n = grid.n();
        // translation invariant: tabulate by lag once
        let by_lag: Vec<f64> = (0..n)
            .map(|lag| {
                if lag == 0 {
                    return 0.0;
                }
                let q = lag as f64 / n as f64;
                c * (hurwitz_zeta(sigma, q) + hurwitz_zeta(sigma, 1.0 - q))
            })
            .collect();
        let mut weights = vec![0.0; n * n];
        for p in 0..n {
            for q in 0..n {
                weights[p * n + q] = by_lag[(p + n - q) % n];
            }
        }
        Self::new(grid, weights)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn scaled(&self, c: f64) -> Self {
        KernelTable { grid: self.grid.clone(), weights: self.weights.iter().map(|w| c * w).collect() }
    }

    /// Two-sided ellipticity check against `|x - y|^{-1-2s}` at the periodic distance.
    pub fn check_bounds(&self, s: f64, bounds: SpaceKernelBounds) -> Result<()> {
        let n = self.grid.len();
        let lower = bounds.lambda.powf(-0.5);
        let upper = bounds.lambda.sqrt();
        for p in 0..n {
            for q in 0..n {
                if p == q {
                    continue;
                }
                let d = self.grid.periodic_distance(self.grid.coords(p), self.grid.coords(q));
                let reference = d.powf(-1.0 - 2.0 * s);
                let w = self.weights[p * n + q];
                let slack = 1e-12 * reference;
                if w > upper * reference + slack {
                    return Err(Error::KernelTable(format!(
                        "weight {w} above upper bound {} at distance {d}",
                        upper * reference
                    )));
                }
                if d <= bounds.cutoff && w < lower * reference - slack {
                    return Err(Error::KernelTable(format!(
                        "weight {w} below lower bound {} at distance {d}",
                        lower * reference
                    )));
                }
            }
        }
        Ok(())
    }
}

/// `sum_{y != x} (f(x) - f(y)) K(x, y) h` with the diagonal excluded.
pub fn kernel_laplacian(field: &Field, table: &KernelTable, s: f64, bounds: SpaceKernelBounds) -> Result<Field> {
    if field.grid() != table.grid() {
        return Err(Error::GridMismatch);
    }
    table.check_bounds(s, bounds)?;
    let n = field.len();
    let h = field.grid().cell_volume();
    let f = field.values();
    let out = (0..n)
        .map(|p| {
            let row = &table.weights[p * n..(p + 1) * n];
            let mut acc = 0.0;
            for (q, (&w, &fq)) in row.iter().zip(f).enumerate() {
                if q != p {
                    acc += (f[p] - fq) * w;
                }
            }
            acc * h
        })
        .collect();
    Field::new(field.grid(), out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn cosine(grid: &Grid, mode: f64) -> Field {
        let xi = 2.0 * PI * mode / grid.length();
        Field::from_fn(grid, |x| (xi * x[0]).cos()).unwrap()
    }

    #[test]
    fn constant_is_annihilated() {
        let g = Grid::new(2, 16, 3.0).unwrap();
        let out = frac_laplacian(&Field::constant(&g, 4.2), 0.3).unwrap();
        assert!(out.sup_norm() < 1e-13);
    }

    #[test]
    fn cosine_is_an_eigenfunction() {
        let g = Grid::new(1, 32, 2.0 * PI).unwrap();
        let f = cosine(&g, 3.0);
        let out = frac_laplacian(&f, 0.4).unwrap();
        let expect = f.scale(3f64.powf(0.8));
        assert!(out.sub(&expect).unwrap().sup_norm() < 1e-12);
    }

    #[test]
    fn order_one_is_minus_laplacian() {
        let g = Grid::new(1, 64, 2.0 * PI).unwrap();
        let f = Field::from_fn(&g, |x| (x[0].sin()).exp()).unwrap();
        let a = frac_laplacian(&f, 1.0).unwrap();
        let b = grid::apply_multiplier(&f, |x2| x2);
        assert!(a.sub(&b).unwrap().sup_norm() < 1e-12);
        assert!(frac_laplacian(&f, 1.5).is_err());
        assert!(frac_laplacian(&f, 0.0).is_err());
    }

    #[test]
    fn output_has_zero_mean() {
        let g = Grid::new(1, 64, 5.0).unwrap();
        let f = Field::from_fn(&g, |x| 1.0 + x[0] * x[0]).unwrap();
        assert!(frac_laplacian(&f, 0.7).unwrap().mean().abs() < 1e-12);
    }

    #[test]
    fn operator_table_matches_direct() {
        let g = Grid::new(2, 16, 2.0).unwrap();
        let f = Field::from_fn(&g, |x| (x[0] * x[1]).sin()).unwrap();
        let op = SpectralOperator::frac_laplacian(&g, 0.35);
        let a = op.apply(&f).unwrap();
        let b = frac_laplacian(&f, 0.35).unwrap();
        assert!(a.sub(&b).unwrap().sup_norm() < 1e-13);
    }

    #[test]
    fn inverse_undoes_operator_on_zero_mean() {
        let g = Grid::new(1, 64, 2.0 * PI).unwrap();
        let f = Field::from_fn(&g, |x| x[0].sin() + (3.0 * x[0]).cos()).unwrap();
        let back = inverse_frac_laplacian(&frac_laplacian(&f, 0.6).unwrap(), 0.6).unwrap();
        assert!(back.sub(&f).unwrap().sup_norm() < 1e-12);
    }

    #[test]
    fn hurwitz_zeta_reduces_to_riemann() {
        // zeta(2) = pi^2 / 6, zeta(2, 1/2) = (2^2 - 1) zeta(2)
        assert!((hurwitz_zeta(2.0, 1.0) - PI * PI / 6.0).abs() < 1e-14);
        assert!((hurwitz_zeta(2.0, 0.5) - 3.0 * PI * PI / 6.0).abs() < 1e-13);
        // small q is dominated by q^{-sigma}
        let direct: f64 = (0..200000).map(|k| (0.01 + k as f64).powf(-3.0)).sum();
        assert!((hurwitz_zeta(3.0, 0.01) - direct).abs() < 1e-9 * direct);
    }

    #[test]
    fn kernel_constant_at_half() {
        // C_{1,1/2} = 1 / pi
        assert!((fractional_kernel_constant(0.5) - 1.0 / PI).abs() < 1e-14);
    }

    #[test]
    fn kernel_rejects_asymmetric_table() {
        let g = Grid::new(1, 8, 1.0).unwrap();
        let mut w = vec![1.0; 64];
        w[1] = 2.0;
        assert!(matches!(KernelTable::new(&g, w), Err(Error::KernelTable(_))));
    }

    #[test]
    fn kernel_rejects_bound_violation() {
        let g = Grid::new(1, 16, 2.0 * PI).unwrap();
        let table = KernelTable::periodized_fractional(&g, 0.5).unwrap();
        let f = cosine(&g, 1.0);
        // C = 1 / pi needs lambda >= pi^2 for the lower bound
        let tight = SpaceKernelBounds::new(2.0).unwrap();
        assert!(kernel_laplacian(&f, &table, 0.5, tight).is_err());
        let loose = SpaceKernelBounds::new(40.0).unwrap();
        assert!(kernel_laplacian(&f, &table, 0.5, loose).is_ok());
    }

    #[test]
    fn kernel_constant_field_and_linearity() {
        let g = Grid::new(1, 32, 2.0 * PI).unwrap();
        let table = KernelTable::periodized_fractional(&g, 0.3).unwrap();
        let bounds = SpaceKernelBounds::new(400.0).unwrap();
        let zero = kernel_laplacian(&Field::constant(&g, 2.0), &table, 0.3, bounds).unwrap();
        assert!(zero.sup_norm() < 1e-12);
        let f = Field::from_fn(&g, |x| x[0].sin().exp()).unwrap();
        let once = kernel_laplacian(&f, &table, 0.3, bounds).unwrap();
        let twice = kernel_laplacian(&f, &table.scaled(2.0), 0.3, bounds).unwrap();
        assert_eq!(twice.values(), once.scale(2.0).values());
    }

    #[test]
    fn kernel_quadrature_converges_to_spectral() {
        let s = 0.3;
        let bounds = SpaceKernelBounds::new(1e4).unwrap();
        let mut errors = Vec::new();
        for n in [64, 128, 256] {
            let g = Grid::new(1, n, 2.0 * PI).unwrap();
            let f = cosine(&g, 1.0);
            let table = KernelTable::periodized_fractional(&g, s).unwrap();
            let k = kernel_laplacian(&f, &table, s, bounds).unwrap();
            let e = frac_laplacian(&f, s).unwrap();
            errors.push(k.sub(&e).unwrap().sup_norm());
        }
        assert!(errors[0] < 0.1, "{errors:?}");
        assert!(errors[1] < 0.7 * errors[0] && errors[2] < 0.7 * errors[1], "{errors:?}");
    }
}
