//! Periodic lattice in one or two dimensions, grid functions, and the
//! discrete Fourier transform that every spectral operator goes through.
//!
//! FFT normalization: the forward transform is the plain sum
//! `F_k = sum_x f(x) exp(-i xi_k . x)` and the inverse carries the factor
//! `1 / n^N`. With this choice Parseval reads
//!
//! ```text
//! sum_x |f(x)|^2 * cell_volume = sum_k |F_k|^2 * cell_volume / n^N
//! ```
//!
//! and the zero mode equals `integrate(f) / cell_volume`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

/// Uniform periodic lattice with `n` points per dimension on `[0, length)^dim`.
#[derive(Clone)]
pub struct Grid {
    dim: usize,
    n: usize,
    length: f64,
    plans: Arc<Plans>,
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.n == other.n && self.length == other.length
    }
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid").field("dim", &self.dim).field("n", &self.n).field("length", &self.length).finish()
    }
}

impl Grid {
    pub fn new(dim: usize, n: usize, length: f64) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidGrid(format!("dimension must be 1 or 2, got {dim}")));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!("points per dimension must be a power of two >= 8, got {n}")));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidGrid(format!("period must be positive, got {length}")));
        }
        let mut planner = FftPlanner::new();
        let plans = Plans { forward: planner.plan_fft_forward(n), inverse: planner.plan_fft_inverse(n) };
        Ok(Grid { dim, n, length, plans: Arc::new(plans) })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Total number of lattice points, `n^dim`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Coordinates of a flat index. Layout is row-major with `x` fastest.
    pub fn coords(&self, index: usize) -> [f64; 2] {
        let h = self.spacing();
        match self.dim {
            1 => [index as f64 * h, 0.0],
            _ => [(index % self.n) as f64 * h, (index / self.n) as f64 * h],
        }
    }

    /// Signed integer wavenumber of a one-dimensional FFT slot.
    fn signed_mode(&self, slot: usize) -> f64 {
        if slot <= self.n / 2 {
            slot as f64
        } else {
            slot as f64 - self.n as f64
        }
    }

    /// `|xi_k|^2` for a flat mode index, with `xi = 2 pi / L * integer`.
    pub fn xi_norm_sq(&self, mode: usize) -> f64 {
        let base = 2.0 * PI / self.length;
        match self.dim {
            1 => (base * self.signed_mode(mode)).powi(2),
            _ => {
                let kx = self.signed_mode(mode % self.n);
                let ky = self.signed_mode(mode / self.n);
                base * base * (kx * kx + ky * ky)
            }
        }
    }

    /// Minimal-image distance between two points of the torus.
    pub fn periodic_distance(&self, a: [f64; 2], b: [f64; 2]) -> f64 {
        let wrap = |d: f64| {
            let d = d.rem_euclid(self.length);
            d.min(self.length - d)
        };
        let dx = wrap(a[0] - b[0]);
        match self.dim {
            1 => dx,
            _ => dx.hypot(wrap(a[1] - b[1])),
        }
    }

    fn fft_in_place(&self, data: &mut [Complex64], inverse: bool) {
        let plan = if inverse { &self.plans.inverse } else { &self.plans.forward };
        let n = self.n;
        // rows (x direction) are contiguous
        plan.process(data);
        if self.dim == 2 {
            let mut column = vec![Complex64::new(0.0, 0.0); n];
            for ix in 0..n {
                for iy in 0..n {
                    column[iy] = data[iy * n + ix];
                }
                plan.process(&mut column);
                for iy in 0..n {
                    data[iy * n + ix] = column[iy];
                }
            }
        }
    }
}

/// Real grid function. Values are finite after every public constructor.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::FieldLength { expected: grid.len(), got: values.len() });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Field { grid: grid.clone(), values })
    }

    /// Internal constructor for values produced by finite arithmetic on finite inputs.
    pub(crate) fn from_raw(grid: &Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Field { grid: grid.clone(), values }
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &Grid, c: f64) -> Self {
        Field { grid: grid.clone(), values: vec![c; grid.len()] }
    }

    /// Samples `f` at every lattice point.
    pub fn from_fn(grid: &Grid, f: impl Fn([f64; 2]) -> f64) -> Result<Self> {
        let values = (0..grid.len()).map(|i| f(grid.coords(i))).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub(crate) fn check_same_grid(&self, other: &Field) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field::from_raw(&self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    /// Pointwise `f(a, b)`; the grids must agree.
    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Field> {
        self.check_same_grid(other)?;
        Ok(Field::from_raw(&self.grid, self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect()))
    }

    pub fn scale(&self, c: f64) -> Field {
        self.map(|v| c * v)
    }

    /// `self + c * other`.
    pub fn axpy(&self, c: f64, other: &Field) -> Result<Field> {
        self.zip_map(other, |a, b| a + c * b)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn add_constant(&self, c: f64) -> Field {
        self.map(|v| v + c)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn l1_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum::<f64>() * self.grid.cell_volume()
    }

    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * self.grid.cell_volume()).sqrt()
    }

    /// Discrete `L^2` inner product `sum f g * cell_volume`.
    pub fn dot(&self, other: &Field) -> Result<f64> {
        self.check_same_grid(other)?;
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum::<f64>() * self.grid.cell_volume())
    }
}

/// Fourier coefficients of a field in standard FFT layout.
#[derive(Clone, Debug)]
pub struct Spectrum {
    grid: Grid,
    coeffs: Vec<Complex64>,
}

impl Spectrum {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Multiplies mode `k` by `multiplier(|xi_k|^2)`.
    pub fn apply_multiplier(&mut self, multiplier: impl Fn(f64) -> f64) {
        for (mode, c) in self.coeffs.iter_mut().enumerate() {
            *c *= multiplier(self.grid.xi_norm_sq(mode));
        }
    }

    /// Multiplies mode `k` by `values[k]`.
    pub fn apply_table(&mut self, values: &[f64]) {
        for (c, v) in self.coeffs.iter_mut().zip(values) {
            *c *= *v;
        }
    }
}

pub fn transform(field: &Field) -> Spectrum {
    let mut data: Vec<Complex64> = field.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    field.grid.fft_in_place(&mut data, false);
    Spectrum { grid: field.grid.clone(), coeffs: data }
}

/// Inverse transform, keeping the real part.
pub fn inverse(spectrum: &Spectrum) -> Field {
    let mut data = spectrum.coeffs.clone();
    spectrum.grid.fft_in_place(&mut data, true);
    let scale = 1.0 / spectrum.grid.len() as f64;
    Field::from_raw(&spectrum.grid, data.iter().map(|c| c.re * scale).collect())
}

pub fn integrate(field: &Field) -> f64 {
    field.values.iter().sum::<f64>() * field.grid.cell_volume()
}

/// Applies a radial Fourier multiplier `m(|xi|^2)` to a field.
pub fn apply_multiplier(field: &Field, multiplier: impl Fn(f64) -> f64) -> Field {
    let mut spectrum = transform(field);
    spectrum.apply_multiplier(multiplier);
    inverse(&spectrum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(grid: &Grid, seed: u64) -> Field {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Field::new(grid, (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(Grid::new(3, 16, 1.0).is_err());
        assert!(Grid::new(1, 4, 1.0).is_err());
        assert!(Grid::new(1, 24, 1.0).is_err());
        assert!(Grid::new(1, 16, 0.0).is_err());
        assert!(Grid::new(2, 8, 1.0).is_ok());
    }

    #[test]
    fn field_rejects_nan_and_wrong_length() {
        let g = Grid::new(1, 8, 1.0).unwrap();
        assert!(matches!(Field::new(&g, vec![0.0; 7]), Err(Error::FieldLength { .. })));
        let mut v = vec![0.0; 8];
        v[3] = f64::NAN;
        assert!(matches!(Field::new(&g, v), Err(Error::NonFinite { index: 3 })));
    }

    #[test]
    fn constant_has_only_zero_mode() {
        let g = Grid::new(1, 16, 2.0 * PI).unwrap();
        let s = transform(&Field::constant(&g, 3.0));
        assert!((s.coeffs()[0].re - 3.0 * 16.0).abs() < 1e-12);
        for c in &s.coeffs()[1..] {
            assert!(c.norm() < 1e-12);
        }
    }

    #[test]
    fn single_harmonic_has_two_modes() {
        let l = 3.0;
        let g = Grid::new(1, 16, l).unwrap();
        let f = Field::from_fn(&g, |x| (2.0 * PI * x[0] / l).cos()).unwrap();
        let s = transform(&f);
        let nonzero: Vec<usize> = (0..16).filter(|&k| s.coeffs()[k].norm() > 1e-10).collect();
        assert_eq!(nonzero, vec![1, 15]);
        assert!((s.coeffs()[1].re - 8.0).abs() < 1e-12);
        assert!((s.coeffs()[15].re - 8.0).abs() < 1e-12);
    }

    #[test]
    fn round_trip_and_parseval() {
        for (dim, n) in [(1, 64), (2, 16)] {
            let g = Grid::new(dim, n, 1.7).unwrap();
            let f = random_field(&g, 7);
            let s = transform(&f);
            let back = inverse(&s);
            let err = back.sub(&f).unwrap().sup_norm() / f.sup_norm();
            assert!(err <= 1e-12, "round trip error {err}");

            let lhs = f.values().iter().map(|v| v * v).sum::<f64>() * g.cell_volume();
            let rhs = s.coeffs().iter().map(|c| c.norm_sqr()).sum::<f64>() * g.cell_volume() / g.len() as f64;
            assert!((lhs - rhs).abs() <= 1e-12 * lhs);
        }
    }

    #[test]
    fn transform_is_linear() {
        let g = Grid::new(2, 16, 1.0).unwrap();
        let f = random_field(&g, 1);
        let h = random_field(&g, 2);
        let combo = f.scale(0.3).axpy(-1.7, &h).unwrap();
        let (sf, sh, sc) = (transform(&f), transform(&h), transform(&combo));
        for k in 0..g.len() {
            let expect = sf.coeffs()[k] * 0.3 - sh.coeffs()[k] * 1.7;
            assert!((sc.coeffs()[k] - expect).norm() <= 1e-12 * (1.0 + expect.norm()));
        }
    }

    #[test]
    fn integrate_matches_zero_mode() {
        let g = Grid::new(1, 8, 2.0 * PI).unwrap();
        assert!((integrate(&Field::constant(&g, 1.0)) - 2.0 * PI).abs() < 1e-14);
        let c = Field::from_fn(&g, |x| x[0].cos()).unwrap();
        assert!(integrate(&c).abs() < 1e-12);

        let f = random_field(&Grid::new(2, 16, 0.5).unwrap(), 3);
        let zero = transform(&f).coeffs()[0].re;
        let vol = f.grid().cell_volume();
        assert!((integrate(&f) - vol * zero).abs() < 1e-13);
    }

    #[test]
    fn barenblatt_mass() {
        // m = 2, N = 1: U(t, x) = t^(-1/3) (C - x^2 t^(-2/3) / 12)_+ with mass (4/3) C^(3/2) sqrt(12).
        let (c, t) = (0.5_f64, 1.0_f64);
        let l = 8.0;
        let g = Grid::new(1, 1 << 16, l).unwrap();
        let f = Field::from_fn(&g, |x| {
            let y = x[0] - l / 2.0;
            t.powf(-1.0 / 3.0) * (c - y * y * t.powf(-2.0 / 3.0) / 12.0).max(0.0)
        })
        .unwrap();
        let exact = 4.0 / 3.0 * c.powf(1.5) * 12f64.sqrt();
        assert!((integrate(&f) - exact).abs() < 1e-6);
    }

    #[test]
    fn periodic_distance_wraps() {
        let g = Grid::new(2, 8, 10.0).unwrap();
        assert!((g.periodic_distance([1.0, 0.0], [9.0, 0.0]) - 2.0).abs() < 1e-14);
        assert!((g.periodic_distance([0.5, 9.5], [9.5, 0.5]) - 2f64.sqrt()).abs() < 1e-14);
    }
}
