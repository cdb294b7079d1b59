//! Subcommand bodies. Each returns an [`Outcome`] or an error; the caller maps
//! both onto exit codes.

use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use super::config::{CheckName, ForcingSpec, GridSpec, InitialSpec, RunConfig};
use super::output::{fmt, load_history, write_csv, write_json, write_masses, write_newton_stats, write_snapshots};
use crate::diagnostics::{contraction_suite, oscillation_beta, standard_test_pairs, weak_residual, OscillationReport};
use crate::energy::{energy_inequality_check, truncation_energies, Barrier};
use crate::error::{Error, Result};
use crate::fracops::{marchaud_weights, History, Params};
use crate::grid::{integrate, Field, Grid};
use crate::oracles::{linear_solution, tolerance};
use crate::stepper;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    ChecksFailed,
}

pub const SNAPSHOTS: &str = "snapshots.csv";

fn prepare_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::Config(format!("outputs directory {} is not writable: {e}", dir.display())))
}

/// Runs the configured problem from scratch.
pub fn run_solver(cfg: &RunConfig) -> Result<History> {
    let grid = cfg.grid()?;
    let initial = cfg.initial_field(&grid)?;
    let forcing = cfg.forcing_fields(&grid)?;
    stepper::solve(&cfg.params, &initial, forcing)
}

/// The stored trajectory in the outputs directory when present, otherwise a
/// fresh solve whose snapshots, masses and solver statistics are written.
pub fn obtain_history(cfg: &RunConfig) -> Result<History> {
    prepare_dir(&cfg.outputs)?;
    let path = cfg.outputs.join(SNAPSHOTS);
    if path.is_file() {
        let grid = cfg.grid()?;
        let history = load_history(&path, &cfg.params, &grid)?;
        return match cfg.forcing_fields(&grid)? {
            Some(f) => history.with_forcing(f),
            None => Ok(history),
        };
    }
    let history = run_solver(cfg)?;
    write_trajectory(&cfg.outputs, &history)?;
    Ok(history)
}

fn write_trajectory(dir: &Path, history: &History) -> Result<()> {
    write_snapshots(&dir.join(SNAPSHOTS), history)?;
    write_masses(&dir.join("masses.csv"), history)?;
    write_newton_stats(&dir.join("newton_stats.csv"), history)
}

#[derive(Serialize)]
struct RunReport<'a> {
    params: &'a Params,
    grid: &'a GridSpec,
    initial: &'a InitialSpec,
    forcing: &'a ForcingSpec,
    m_star: f64,
    m_above_m_star: bool,
    dim_above_two_s_over_gamma: bool,
    steps: usize,
    total_newton_iterations: usize,
    max_newton_iterations: usize,
    fallback_steps: usize,
    max_residual: f64,
    mass_initial: f64,
    mass_final: f64,
    wall_time_s: f64,
}

pub fn solve_cmd(cfg: &RunConfig) -> Result<Outcome> {
    prepare_dir(&cfg.outputs)?;
    let start = Instant::now();
    let history = run_solver(cfg)?;
    let wall_time_s = start.elapsed().as_secs_f64();
    write_trajectory(&cfg.outputs, &history)?;
    let dim = cfg.grid.dim;
    let (m_ok, dim_ok) = cfg.params.existence_conditions(dim);
    let stats = history.stats();
    let report = RunReport {
        params: &cfg.params,
        grid: &cfg.grid,
        initial: &cfg.initial,
        forcing: &cfg.forcing,
        m_star: cfg.params.m_star(dim),
        m_above_m_star: m_ok,
        dim_above_two_s_over_gamma: dim_ok,
        steps: stats.len(),
        total_newton_iterations: stats.iter().map(|s| s.iterations).sum(),
        max_newton_iterations: stats.iter().map(|s| s.iterations).max().unwrap_or(0),
        fallback_steps: stats.iter().filter(|s| s.used_fallback).count(),
        max_residual: stats.iter().map(|s| s.residual).fold(0.0, f64::max),
        mass_initial: integrate(history.field(0)),
        mass_final: integrate(history.field(history.len() - 1)),
        wall_time_s,
    };
    write_json(&cfg.outputs.join("run_report.json"), &report)?;
    Ok(Outcome::Pass)
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub pass: bool,
    pub value: f64,
    pub threshold: f64,
    pub detail: serde_json::Value,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub pass: bool,
    pub checks: Vec<CheckResult>,
}

pub fn verify_cmd(cfg: &RunConfig) -> Result<Outcome> {
    let history = obtain_history(cfg)?;
    let report = verify_history(cfg, &history)?;
    write_json(&cfg.outputs.join("verify_report.json"), &report)?;
    Ok(if report.pass { Outcome::Pass } else { Outcome::ChecksFailed })
}

pub fn verify_history(cfg: &RunConfig, history: &History) -> Result<VerifyReport> {
    let checks = cfg
        .checks()
        .into_iter()
        .map(|c| match c {
            CheckName::Mass => check_mass(history),
            CheckName::Contraction => check_contraction(cfg, history),
            CheckName::Energy => check_energy(history),
            CheckName::DeGiorgi => check_de_giorgi(history),
            CheckName::WeakResidual => check_weak_residual(history),
            CheckName::Oracle => check_oracle(history),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(VerifyReport { pass: checks.iter().all(|c| c.pass), checks })
}

/// Masses obey the scalar memory recursion driven by the forcing integrals.
fn check_mass(history: &History) -> Result<CheckResult> {
    let p = history.params();
    let masses: Vec<f64> = history.fields().iter().map(integrate).collect();
    let mut expected = vec![masses[0]];
    for j in 1..history.len() {
        let w = marchaud_weights(p, j)?;
        let memory: f64 = (1..j).map(|i| w.weights[i] * expected[i]).sum::<f64>() + w.tail * expected[0];
        let source = history.forcing_at(j).map_or(0.0, integrate);
        expected.push((memory + source) / w.diag);
    }
    let drift = masses.iter().zip(&expected).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(CheckResult {
        name: CheckName::Mass.as_str(),
        pass: drift <= tolerance::MASS,
        value: drift,
        threshold: tolerance::MASS,
        detail: json!({ "mass_initial": masses[0], "mass_final": masses[masses.len() - 1] }),
    })
}

/// Smooth zero-mean perturbation with seeded random low-mode coefficients.
pub fn perturbation(grid: &Grid, seed: u64, amplitude: f64) -> Result<Field> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let wave = 2.0 * std::f64::consts::PI / grid.length();
    let modes: Vec<(f64, f64, f64)> = (1..=4)
        .map(|q| (q as f64 * wave, rng.gen_range(-1.0..1.0), rng.gen_range(0.0..std::f64::consts::TAU)))
        .collect();
    let f = Field::from_fn(grid, |x| modes.iter().map(|&(k, c, ph)| c * (k * (x[0] + x[1]) + ph).cos()).sum())?;
    let f = f.add_constant(-f.mean());
    let scale = f.sup_norm();
    Ok(if scale > 0.0 { f.scale(amplitude / scale) } else { f })
}

/// Compares the run with a second run from an equal-mass perturbed datum.
/// The L1 margins are asserted only for `s <= 1/2`, where the discrete
/// operator is order preserving.
fn check_contraction(cfg: &RunConfig, history: &History) -> Result<CheckResult> {
    let p = history.params();
    let w0 = history.field(0);
    let amplitude = 0.1 * w0.sup_norm().max(1.0);
    let initial = w0.axpy(1.0, &perturbation(history.grid(), cfg.seed, amplitude)?)?;
    let other = stepper::solve(p, &initial, history.forcing().map(<[Field]>::to_vec))?;
    let report = contraction_suite(history, &other)?;
    let l1_asserted = p.s <= 0.5;
    let h_worst = report.h_star_margins.iter().flatten().fold(f64::INFINITY, |a, &b| a.min(b));
    let l1_worst = report.l1_margins.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    let value = if l1_asserted { h_worst.min(l1_worst) } else { h_worst };
    Ok(CheckResult {
        name: CheckName::Contraction.as_str(),
        pass: value >= report.threshold,
        value,
        threshold: report.threshold,
        detail: json!({
            "seed": cfg.seed,
            "l1_asserted": l1_asserted,
            "worst_l1_margin": l1_worst,
            "worst_h_star_margin": h_worst,
        }),
    })
}

pub const ENERGY_LEVELS: [f64; 3] = [0.0, 0.25, 0.5];

fn energy_windows(k: usize) -> Vec<(usize, usize)> {
    let mut w = vec![(0, k)];
    if k >= 2 {
        w.push((0, k / 2));
        w.push((k / 2, k));
    }
    w
}

fn check_energy(history: &History) -> Result<CheckResult> {
    let p = history.params();
    let mut reports = Vec::new();
    for level in ENERGY_LEVELS {
        let barrier = Barrier::new(level, p.gamma, p.s)?;
        for (j1, j2) in energy_windows(history.len() - 1) {
            reports.push(energy_inequality_check(history, &barrier, j1, j2)?);
        }
    }
    let value = reports.iter().map(|r| r.slack).fold(f64::INFINITY, f64::min);
    Ok(CheckResult {
        name: CheckName::Energy.as_str(),
        pass: value >= -tolerance::ENERGY_SLACK,
        value,
        threshold: -tolerance::ENERGY_SLACK,
        detail: serde_json::to_value(&reports).map_err(|e| Error::Config(e.to_string()))?,
    })
}

pub const DE_GIORGI_LEVELS: usize = 6;

fn check_de_giorgi(history: &History) -> Result<CheckResult> {
    let report = truncation_energies(history, DE_GIORGI_LEVELS)?;
    let ratio = if report.u[0] > 0.0 { report.u[DE_GIORGI_LEVELS] / report.u[0] } else { 0.0 };
    Ok(CheckResult {
        name: CheckName::DeGiorgi.as_str(),
        pass: report.decreasing_from(1),
        value: ratio,
        threshold: tolerance::DE_GIORGI_RATIO,
        detail: serde_json::to_value(&report).map_err(|e| Error::Config(e.to_string()))?,
    })
}

fn check_weak_residual(history: &History) -> Result<CheckResult> {
    let p = history.params();
    let pairs = standard_test_pairs(history.grid(), p.a, p.t_final)?;
    let report = weak_residual(history, &pairs)?;
    Ok(CheckResult {
        name: CheckName::WeakResidual.as_str(),
        pass: report.max <= tolerance::WEAK_RESIDUAL,
        value: report.max,
        threshold: tolerance::WEAK_RESIDUAL,
        detail: json!({ "residuals": report.residuals }),
    })
}

fn check_oracle(history: &History) -> Result<CheckResult> {
    let p = history.params();
    let applicable = p.m == 1.0 && history.forcing().is_none();
    let (pass, value) = if applicable {
        let err = linear_error(history)?;
        (err <= tolerance::LINEAR_L2, err)
    } else {
        (true, f64::NAN)
    };
    Ok(CheckResult {
        name: CheckName::Oracle.as_str(),
        pass,
        value,
        threshold: tolerance::LINEAR_L2,
        detail: json!({ "skipped": !applicable }),
    })
}

/// Relative L2 error of the final state against the spectral linear solution.
pub fn linear_error(history: &History) -> Result<f64> {
    let p = history.params();
    let exact = linear_solution(history.field(0), p.gamma, p.s, p.t_final - p.a)?;
    let last = history.field(history.len() - 1);
    let scale = exact.l2_norm();
    let err = last.sub(&exact)?.l2_norm();
    Ok(if scale > 0.0 { err / scale } else { err })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    K,
    N,
}

/// Restriction of a field onto a coarser grid whose nodes are a subset.
pub fn restrict(fine: &Field, coarse: &Grid) -> Result<Field> {
    let g = fine.grid();
    if g.dim() != coarse.dim() || g.length() != coarse.length() || !g.n().is_multiple_of(coarse.n()) {
        return Err(Error::Config(format!("grid n = {} does not nest in n = {}", coarse.n(), g.n())));
    }
    let r = g.n() / coarse.n();
    let (nf, nc) = (g.n(), coarse.n());
    let values = (0..coarse.len())
        .map(|i| {
            let (iy, ix) = (i / nc, i % nc);
            fine.values()[iy * r * nf + ix * r]
        })
        .collect();
    Field::new(coarse, values)
}

pub fn sweep_cmd(cfg: &RunConfig, param: SweepParam, values: &[usize]) -> Result<Outcome> {
    if values.len() < 2 {
        return Err(Error::Config("a sweep needs at least two values".into()));
    }
    let mut values = values.to_vec();
    values.sort_unstable();
    values.dedup();
    prepare_dir(&cfg.outputs)?;
    let configs: Vec<RunConfig> = values
        .iter()
        .map(|&v| {
            let mut c = cfg.clone();
            match param {
                SweepParam::K => c.params.k = v,
                SweepParam::N => c.grid.n = v,
            }
            c.outputs = cfg.outputs.join(format!("{}_{v}", if param == SweepParam::K { "k" } else { "n" }));
            c.validate()?;
            Ok(c)
        })
        .collect::<Result<_>>()?;
    let runs: Vec<History> = configs
        .par_iter()
        .map(|c| {
            prepare_dir(&c.outputs)?;
            let h = run_solver(c)?;
            write_trajectory(&c.outputs, &h)?;
            Ok(h)
        })
        .collect::<Result<_>>()?;
    let use_oracle = cfg.params.m == 1.0 && cfg.forcing == ForcingSpec::Zero;
    let finest = runs.last().expect("at least two runs");
    let mut errors = Vec::new();
    for (v, h) in values.iter().zip(&runs) {
        let e = if use_oracle {
            linear_error(h)?
        } else if std::ptr::eq(h, finest) {
            continue;
        } else {
            let last = h.field(h.len() - 1);
            let reference = restrict(finest.field(finest.len() - 1), h.grid())?;
            let scale = reference.l2_norm();
            let err = last.sub(&reference)?.l2_norm();
            if scale > 0.0 {
                err / scale
            } else {
                err
            }
        };
        errors.push((*v as f64, e));
    }
    let rows = errors.iter().enumerate().map(|(i, &(v, e))| {
        let order = if i == 0 {
            String::new()
        } else {
            let (v0, e0) = errors[i - 1];
            fmt((e0 / e).ln() / (v / v0).ln())
        };
        vec![fmt(v), fmt(e), order]
    });
    write_csv(&cfg.outputs.join("errors.csv"), &["value", "l2_error", "order_estimate"], rows)?;
    write_json(
        &cfg.outputs.join("sweep_report.json"),
        &json!({
            "parameter": param,
            "values": values,
            "reference": if use_oracle { "linear_oracle" } else { "finest_run" },
        }),
    )?;
    Ok(Outcome::Pass)
}

pub fn beta_cmd(cfg: &RunConfig, center: &[f64], zeta: f64, k_max: usize) -> Result<Outcome> {
    let dim = cfg.grid.dim;
    if center.len() != dim + 1 {
        return Err(Error::Config(format!("center needs t and {dim} space coordinates, got {center:?}")));
    }
    let history = obtain_history(cfg)?;
    let x = [center[1], center.get(2).copied().unwrap_or(0.0)];
    let report = oscillation_beta(&history, center[0], x, zeta, k_max)?;
    write_oscillation(&cfg.outputs, &report)?;
    Ok(Outcome::Pass)
}

fn write_oscillation(dir: &Path, report: &OscillationReport) -> Result<()> {
    let rows = (0..report.osc.len()).map(|k| {
        vec![
            k.to_string(),
            fmt(report.radii[k]),
            fmt(report.time_radii[k]),
            fmt(report.osc[k]),
            report.resolved[k].to_string(),
        ]
    });
    write_csv(&dir.join("oscillation.csv"), &["k", "radius", "time_radius", "osc", "resolved"], rows)?;
    write_json(&dir.join("oscillation.json"), report)
}
