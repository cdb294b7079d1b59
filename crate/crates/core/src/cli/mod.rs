//! Command-line front end: `solve`, `verify`, `sweep` and `beta`.
//!
//! Exit codes: 0 pass, 1 check failure, 2 usage or config error, 3 solver
//! failure. Errors are printed to stderr as one JSON object.

pub mod commands;
pub mod config;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::error::Error;
use commands::{Outcome, SweepParam};
use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "fracpme", version, about = "Time-fractional nonlocal porous medium solver and verifier")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Worker threads for sweeps.
    #[arg(long, global = true, env = "FRACPME_THREADS")]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,

    /// Overrides the configured outputs directory.
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve and write snapshots, masses, solver statistics and a run report.
    Solve(Common),
    /// Run the configured checks on the stored or freshly solved trajectory.
    Verify(Common),
    /// Refinement sweep over the number of steps or grid points.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        param: SweepParam,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<usize>,
    },
    /// Oscillation decay over shrinking cylinders and the fitted exponent.
    Beta {
        #[command(flatten)]
        common: Common,
        /// Cylinder centre `t,x[,y]`.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        center: Vec<f64>,
        #[arg(long, default_value_t = 0.5)]
        zeta: f64,
        #[arg(long, default_value_t = 6)]
        k_max: usize,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Solve(c) | Command::Verify(c) => c,
            Command::Sweep { common, .. } | Command::Beta { common, .. } => common,
        }
    }
}

fn error_kind(e: &Error) -> (&'static str, i32) {
    match e {
        _ if e.is_nonconvergence() => ("nonconvergence", 3),
        Error::NonFinite { .. } | Error::StepFailed { .. } => ("solver", 3),
        Error::Io(_) => ("io", 2),
        Error::OutOfRange(_) => ("range", 2),
        _ => ("config", 2),
    }
}

fn report_error(kind: &str, message: String) {
    eprintln!("{}", json!({ "error": kind, "message": message }));
}

fn load(common: &Common) -> crate::Result<RunConfig> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(out) = &common.out {
        cfg.outputs = out.clone();
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn dispatch(cli: &Cli) -> crate::Result<Outcome> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be positive".into()));
        }
        // a pool configured earlier in the process stays in place
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let cfg = load(cli.command.common())?;
    match &cli.command {
        Command::Solve(_) => commands::solve_cmd(&cfg),
        Command::Verify(_) => commands::verify_cmd(&cfg),
        Command::Sweep { param, values, .. } => commands::sweep_cmd(&cfg, *param, values),
        Command::Beta { center, zeta, k_max, .. } => commands::beta_cmd(&cfg, center, *zeta, *k_max),
    }
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            report_error("usage", e.to_string().trim().to_string());
            return 2;
        }
    };
    match dispatch(&cli) {
        Ok(Outcome::Pass) => 0,
        Ok(Outcome::ChecksFailed) => 1,
        Err(e) => {
            let (kind, code) = error_kind(&e);
            report_error(kind, e.to_string());
            code
        }
    }
}
