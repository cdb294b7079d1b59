//! Discrete fractional operators in time and space.

mod laplacian;
mod marchaud;
mod mittag_leffler;
mod params;

pub use laplacian::{
    frac_laplacian, fractional_kernel_constant, fractional_power, hurwitz_zeta, inverse_frac_laplacian,
    kernel_laplacian, KernelTable, SpectralOperator,
};
pub use marchaud::{kernel_weights, marchaud_apply, marchaud_weights, memory_sum, History, MemoryWeights, StepStats};
pub use mittag_leffler::mittag_leffler;
pub use params::{MemoryRule, Params, SpaceKernelBounds, TimeKernelBounds};
