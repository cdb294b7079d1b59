use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch between operands")]
    GridMismatch,

    #[error("field holds non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("field has {got} values, grid expects {expected}")]
    FieldLength { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("step index {j} outside 1..={k}")]
    StepIndex { j: usize, k: usize },

    #[error("history too short: need step {needed}, have {have} entries")]
    HistoryTooShort { needed: usize, have: usize },

    #[error("kernel table rejected: {0}")]
    KernelTable(String),

    #[error("field mean {mean:e} is not zero; the dual norm is defined on zero-mean fields only")]
    NonZeroMean { mean: f64 },

    #[error("newton solve did not converge after {iterations} iterations (best residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("solve aborted at step {step}: {source}")]
    StepFailed {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("out of range: {0}")]
    OutOfRange(String),

    #[error("incompatible runs: {0}")]
    Incompatible(String),

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True when the failure came from the nonlinear solver, possibly wrapped by a step index.
    pub fn is_nonconvergence(&self) -> bool {
        match self {
            Error::NonConvergence { .. } => true,
            Error::StepFailed { source, .. } => source.is_nonconvergence(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
