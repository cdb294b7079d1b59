//! Implicit solver and verification harness for the time-fractional nonlocal
//! porous medium equation
//!
//! ```text
//! D_t^gamma w + (-Delta)^s (|w|^{m-1} w) = f
//! ```
//!
//! on a periodic lattice in one or two dimensions.

// negated comparisons are used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod diagnostics;
pub mod energy;
pub mod error;
pub mod fracops;
pub mod grid;
pub mod oracles;
pub mod quad;
pub mod stepper;

pub use error::{Error, Result};
pub use fracops::{History, MemoryRule, Params};
pub use grid::{Field, Grid};
