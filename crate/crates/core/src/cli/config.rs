//! JSON run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::output::read_series;
use crate::error::{Error, Result};
use crate::fracops::Params;
use crate::grid::{Field, Grid};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default = "one")]
    pub dim: usize,
    pub n: usize,
    pub length: f64,
}

fn one() -> usize {
    1
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid> {
        Grid::new(self.dim, self.n, self.length)
    }
}

/// Initial datum. Distances are periodic; `center` has one entry per dimension.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    /// `height exp(-|x - center|^2 / width^2)`.
    Gaussian { center: Vec<f64>, width: f64, height: f64 },
    /// `height` on `|x - center| <= half_width`, zero elsewhere.
    Box { center: Vec<f64>, half_width: f64, height: f64 },
    #[default]
    Zero,
    /// CSV with columns `x[,y],w` in grid order.
    File { path: PathBuf },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ForcingSpec {
    #[default]
    Zero,
    /// CSV with columns `t,x[,y],f` holding `f_1 .. f_k` at the step times.
    File { path: PathBuf },
}

/// Checks understood by `verify`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckName {
    Mass,
    Contraction,
    Energy,
    DeGiorgi,
    WeakResidual,
    Oracle,
}

impl CheckName {
    pub const ALL: [CheckName; 6] = [
        CheckName::Mass,
        CheckName::Contraction,
        CheckName::Energy,
        CheckName::DeGiorgi,
        CheckName::WeakResidual,
        CheckName::Oracle,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CheckName::Mass => "mass",
            CheckName::Contraction => "contraction",
            CheckName::Energy => "energy",
            CheckName::DeGiorgi => "de_giorgi",
            CheckName::WeakResidual => "weak_residual",
            CheckName::Oracle => "oracle",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub params: Params,
    pub grid: GridSpec,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default)]
    pub forcing: ForcingSpec,
    #[serde(default = "default_outputs")]
    pub outputs: PathBuf,
    /// Empty means every check.
    #[serde(default)]
    pub checks: Vec<CheckName>,
    #[serde(default)]
    pub seed: u64,
}

fn default_outputs() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    /// Reads and validates a config; relative data paths resolve against the
    /// config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in cfg.data_paths_mut() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    fn data_paths_mut(&mut self) -> impl Iterator<Item = &mut PathBuf> {
        let initial = match &mut self.initial {
            InitialSpec::File { path } => Some(path),
            _ => None,
        };
        let forcing = match &mut self.forcing {
            ForcingSpec::File { path } => Some(path),
            _ => None,
        };
        initial.into_iter().chain(forcing)
    }

    pub fn validate(&self) -> Result<()> {
        let config = |e: Error| Error::Config(e.to_string());
        self.params.validate().map_err(config)?;
        let grid = self.grid.build().map_err(config)?;
        match &self.initial {
            InitialSpec::Gaussian { center, width, height } => {
                check_center(center, grid.dim())?;
                if !(*width > 0.0 && height.is_finite()) {
                    return Err(Error::Config("gaussian needs width > 0 and a finite height".into()));
                }
            }
            InitialSpec::Box { center, half_width, height } => {
                check_center(center, grid.dim())?;
                if !(*half_width > 0.0 && height.is_finite()) {
                    return Err(Error::Config("box needs half_width > 0 and a finite height".into()));
                }
            }
            InitialSpec::Zero => {}
            InitialSpec::File { path } => check_file(path)?,
        }
        if let ForcingSpec::File { path } = &self.forcing {
            check_file(path)?;
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        self.grid.build()
    }

    pub fn initial_field(&self, grid: &Grid) -> Result<Field> {
        let centre = |c: &[f64]| [c[0], c.get(1).copied().unwrap_or(0.0)];
        match &self.initial {
            InitialSpec::Gaussian { center, width, height } => {
                let c = centre(center);
                Field::from_fn(grid, |x| height * (-(grid.periodic_distance(x, c) / width).powi(2)).exp())
            }
            InitialSpec::Box { center, half_width, height } => {
                let c = centre(center);
                Field::from_fn(grid, |x| if grid.periodic_distance(x, c) <= *half_width { *height } else { 0.0 })
            }
            InitialSpec::Zero => Ok(Field::zeros(grid)),
            InitialSpec::File { path } => {
                let series = read_series(path, grid)?;
                match series.as_slice() {
                    [(_, f)] => Ok(f.clone()),
                    _ => Err(Error::Config(format!("{} must hold exactly one field", path.display()))),
                }
            }
        }
    }

    /// `f_1 .. f_k`, or `None` for an unforced run.
    pub fn forcing_fields(&self, grid: &Grid) -> Result<Option<Vec<Field>>> {
        let ForcingSpec::File { path } = &self.forcing else {
            return Ok(None);
        };
        let series = read_series(path, grid)?;
        let p = &self.params;
        if series.len() != p.k {
            return Err(Error::Config(format!("forcing file holds {} steps, expected {}", series.len(), p.k)));
        }
        let tol = 1e-9 * p.eps();
        for (j, (t, _)) in series.iter().enumerate() {
            if (t - p.time(j + 1)).abs() > tol {
                return Err(Error::Config(format!("forcing time {t} does not match step {}", j + 1)));
            }
        }
        Ok(Some(series.into_iter().map(|(_, f)| f).collect()))
    }

    pub fn checks(&self) -> Vec<CheckName> {
        let mut checks = if self.checks.is_empty() { CheckName::ALL.to_vec() } else { self.checks.clone() };
        checks.sort();
        checks.dedup();
        checks
    }
}

fn check_center(center: &[f64], dim: usize) -> Result<()> {
    if center.len() != dim || center.iter().any(|c| !c.is_finite()) {
        return Err(Error::Config(format!("center needs {dim} finite coordinates, got {center:?}")));
    }
    Ok(())
}

fn check_file(path: &Path) -> Result<()> {
    if !path.is_file() {
        return Err(Error::Config(format!("referenced file {} does not exist", path.display())));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const DESK: &str = r#"{
        "params": {"gamma": 0.5, "s": 0.5, "m": 1.0, "t_final": 1.0, "k": 20},
        "grid": {"n": 64, "length": 6.283185307179586},
        "initial": {"type": "gaussian", "center": [3.141592653589793], "width": 1.0, "height": 1.0}
    }"#;

    #[test]
    fn parses_with_defaults() {
        let cfg = RunConfig::from_json(DESK).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.forcing, ForcingSpec::Zero);
        assert_eq!(cfg.checks(), CheckName::ALL.to_vec());
        assert_eq!(cfg.params.newton_tol, 1e-11);
        let g = cfg.grid().unwrap();
        let f = cfg.initial_field(&g).unwrap();
        assert_eq!(f.max(), 1.0);
    }

    #[test]
    fn rejects_unknown_fields_and_bad_centres() {
        assert!(matches!(RunConfig::from_json(r#"{"params": {}}"#), Err(Error::Config(_))));
        let bad = DESK.replace("[3.141592653589793]", "[1.0, 2.0]");
        assert!(matches!(RunConfig::from_json(&bad).unwrap().validate(), Err(Error::Config(_))));
        let extra = DESK.replace("\"k\": 20", "\"k\": 20, \"bogus\": 1");
        assert!(RunConfig::from_json(&extra).is_err());
    }

    #[test]
    fn missing_file_is_a_config_error() {
        let cfg = DESK.replace(
            r#"{"type": "gaussian", "center": [3.141592653589793], "width": 1.0, "height": 1.0}"#,
            r#"{"type": "file", "path": "/nonexistent/w0.csv"}"#,
        );
        assert!(matches!(RunConfig::from_json(&cfg).unwrap().validate(), Err(Error::Config(_))));
    }
}
