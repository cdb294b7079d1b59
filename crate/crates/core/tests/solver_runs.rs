//! End-to-end runs checked against scalar recursions and the diagnostics.

use std::f64::consts::PI;

use fracpme::diagnostics::{
    contraction_suite, oscillation_beta, rescaled, standard_test_pairs, temporal_holder, weak_residual,
};
use fracpme::energy::{energy_inequality_check, Barrier};
use fracpme::fracops::mittag_leffler;
use fracpme::grid::integrate;
use fracpme::oracles::{classical_pme_trajectory, linear_solution, tolerance};
use fracpme::stepper::solve;
use fracpme::{Field, Grid, History, Params};
use statrs::function::gamma::gamma;

fn desk_grid(n: usize) -> Grid {
    Grid::new(1, n, 2.0 * PI).unwrap()
}

fn gaussian(g: &Grid) -> Field {
    Field::from_fn(g, |x| (-(x[0] - PI).powi(2)).exp()).unwrap()
}

fn linear_run(n: usize, k: usize) -> History {
    let g = desk_grid(n);
    solve(&Params::new(0.5, 0.5, 1.0, 0.0, 1.0, k).unwrap(), &gaussian(&g), None).unwrap()
}

/// Scalar L1 recursion `c sum_i (b_{j-i-1} - b_{j-i}) r_i + ... + mu r_j = 0` written out directly.
fn scalar_recursion(gamma_: f64, eps: f64, mu: f64, k: usize) -> Vec<f64> {
    let q = 1.0 - gamma_;
    let c = eps.powf(-gamma_) / gamma(2.0 - gamma_);
    let b = |n: usize| (n as f64 + 1.0).powf(q) - (n as f64).powf(q);
    let mut r = vec![1.0];
    for j in 1..=k {
        // c [ r_j - sum_{i<j} (b_{j-i-1} - b_{j-i}) r_i - b_{j-1} r_0 ] ... in the difference form
        let memory = c * b(j - 1) * r[0] + (1..j).map(|i| c * (b(j - i - 1) - b(j - i)) * r[i]).sum::<f64>();
        r.push(memory / (c + mu));
    }
    r
}

#[test]
fn linear_margins_follow_modewise_decay() {
    let g = desk_grid(64);
    let k = 100;
    let p = Params::new(0.5, 0.5, 1.0, 0.0, 1.0, k).unwrap();
    let base = gaussian(&g);
    let shifted = base.axpy(0.2, &Field::from_fn(&g, |x| (2.0 * x[0]).cos()).unwrap()).unwrap();
    let r1 = solve(&p, &base, None).unwrap();
    let r2 = solve(&p, &shifted, None).unwrap();
    let report = contraction_suite(&r1, &r2).unwrap();
    assert!(report.pass);
    // a single mode with |xi|^{2s} = 2 decays by the scalar recursion
    let decay = scalar_recursion(0.5, p.eps(), 2.0, k);
    let margins = report.h_star_margins.unwrap();
    let d0 = margins[0] + report.l1_margins[0]; // both zero at j = 0
    assert_eq!(d0, 0.0);
    let h0 = fracpme::energy::h_star_norm(&r1.field(0).sub(r2.field(0)).unwrap(), 0.5).unwrap();
    for j in 0..=k {
        let expected = h0 * (1.0 - decay[j]);
        assert!((margins[j] - expected).abs() <= 1e-10 * h0, "j = {j}");
    }
    // and the recursion tracks the Mittag-Leffler decay to the scheme's accuracy
    let exact = mittag_leffler(0.5, -2.0).unwrap();
    assert!((decay[k] - exact).abs() <= 1e-3, "{} vs {exact}", decay[k]);
}

#[test]
fn linear_error_decreases_with_steps() {
    let errors: Vec<f64> = [50, 100, 200]
        .iter()
        .map(|&k| {
            let h = linear_run(64, k);
            let exact = linear_solution(h.field(0), 0.5, 0.5, 1.0).unwrap();
            h.field(k).sub(&exact).unwrap().l2_norm() / exact.l2_norm()
        })
        .collect();
    assert!(errors[0] <= tolerance::LINEAR_L2);
    assert!(errors[1] < errors[0] && errors[2] < errors[1], "{errors:?}");
}

#[test]
fn forced_mass_follows_scalar_recursion() {
    let g = desk_grid(32);
    let k = 30;
    let p = Params::new(0.4, 0.6, 2.0, 0.0, 1.0, k).unwrap();
    let forcing: Vec<Field> =
        (1..=k).map(|j| Field::from_fn(&g, |x| (1.0 + x[0].sin()) * (j as f64 * 0.1).cos()).unwrap()).collect();
    let w0 = Field::from_fn(&g, |x| 0.5 + 0.3 * x[0].cos()).unwrap();
    let h = solve(&p, &w0, Some(forcing.clone())).unwrap();
    // mass M solves the scalar scheme with source int f_j
    let q = 1.0 - p.gamma;
    let c = p.eps().powf(-p.gamma) / gamma(2.0 - p.gamma);
    let b = |n: usize| (n as f64 + 1.0).powf(q) - (n as f64).powf(q);
    let mut m = vec![integrate(&w0)];
    for j in 1..=k {
        let memory = c * b(j - 1) * m[0] + (1..j).map(|i| c * (b(j - i - 1) - b(j - i)) * m[i]).sum::<f64>();
        m.push((memory + integrate(&forcing[j - 1])) / c);
    }
    for (j, (field, expected)) in h.fields().iter().zip(&m).enumerate() {
        assert!((integrate(field) - expected).abs() <= tolerance::MASS, "j = {j}");
    }
}

#[test]
fn weak_residual_shrinks_under_refinement() {
    let residual = |k: usize| {
        let h = linear_run(128, k);
        let pairs = standard_test_pairs(h.grid(), 0.0, 1.0).unwrap();
        weak_residual(&h, &pairs).unwrap().max
    };
    let (coarse, fine) = (residual(100), residual(200));
    assert!(coarse <= tolerance::WEAK_RESIDUAL);
    assert!(fine <= (1.0 - tolerance::WEAK_REDUCTION) * coarse, "{coarse:e} -> {fine:e}");
}

#[test]
fn energy_inequality_on_nonlinear_run() {
    let g = desk_grid(128);
    let w0 = Field::from_fn(&g, |x| (1.0 - (x[0] - PI).powi(2) / 2.25).max(0.0)).unwrap();
    let h = solve(&Params::new(0.5, 0.5, 2.0, 0.0, 2.0, 80).unwrap(), &w0, None).unwrap();
    for level in [0.0, 0.25, 0.5] {
        let barrier = Barrier::new(level, 0.5, 0.5).unwrap();
        for (j1, j2) in [(0, 80), (0, 1), (40, 80), (79, 80)] {
            let r = energy_inequality_check(&h, &barrier, j1, j2).unwrap();
            assert!(r.slack >= -tolerance::ENERGY_SLACK, "L = {level}, ({j1}, {j2}): {r:?}");
            assert_eq!(r.b_bound_violations, 0);
        }
    }
    // a barrier above the solution leaves nothing to measure
    let high = Barrier::new(5.0, 0.5, 0.5).unwrap();
    let r = energy_inequality_check(&h, &high, 0, 80).unwrap();
    assert_eq!((r.b_initial, r.b_final, r.dissipation), (0.0, 0.0, 0.0));
    assert!(r.slack >= 0.0);
}

fn box_run(n: usize, k: usize) -> History {
    let g = desk_grid(n);
    let w0 = Field::from_fn(&g, |x| if (x[0] - PI).abs() <= 1.5 { 1.0 } else { 0.0 }).unwrap();
    solve(&Params::new(0.5, 0.5, 2.0, 0.0, 2.0, k).unwrap(), &w0, None).unwrap()
}

#[test]
fn oscillation_estimator_is_scale_invariant() {
    let h = box_run(128, 100);
    let centre = [PI + 1.5, 0.0];
    let base = oscillation_beta(&h, 2.0, centre, 0.5, 6).unwrap();
    assert!(!base.degenerate);
    for r in [0.5, 2.0, 3.0] {
        let hr = rescaled(&h, r).unwrap();
        let t = 2.0 * r.powf(h.params().s / h.params().gamma);
        let scaled = oscillation_beta(&hr, t, [r * centre[0], 0.0], 0.5, 6).unwrap();
        assert!((scaled.beta_fit - base.beta_fit).abs() <= 0.05 * base.beta_fit.abs());
    }
}

#[test]
fn linear_beta_is_stable_under_grid_refinement() {
    let fit = |n: usize| oscillation_beta(&linear_run(n, 200), 1.0, [PI + 1.0, 0.0], 0.5, 6).unwrap().beta_fit;
    let (coarse, fine) = (fit(256), fit(512));
    assert!((fine - coarse).abs() <= tolerance::BETA_STABILITY * coarse.abs(), "{coarse} vs {fine}");
}

#[test]
fn temporal_exponent_is_stable_under_step_refinement() {
    let a = temporal_holder(&box_run(64, 100), None).unwrap().exponent;
    let b = temporal_holder(&box_run(64, 200), None).unwrap().exponent;
    assert!(a > 0.0 && b > 0.0);
    assert!((a - b).abs() <= tolerance::BETA_STABILITY * a, "{a} vs {b}");
}

#[test]
fn classical_reference_undershoot_is_small() {
    // the spectral Laplacian is not order-preserving, so only near-positivity holds
    let g = Grid::new(1, 128, 16.0).unwrap();
    let w0 = Field::from_fn(&g, |x| 0.05 + (-(x[0] - 8.0).powi(2)).exp()).unwrap();
    let traj = classical_pme_trajectory(&w0, 2.0, 1.0, 200).unwrap();
    let lowest = traj.iter().map(Field::min).fold(f64::INFINITY, f64::min);
    assert!(lowest >= 0.05 - 1e-6, "min {lowest}");
}
