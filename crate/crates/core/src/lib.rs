//! State estimation and statistical identification for systems driven by
//! piecewise-constant inputs.
//!
//! - [`kernels`]: finite-support kernels and their constants.
//! - [`lpr_filter`]: two-sided local polynomial filter for two-rate sampling.
//! - [`system_sim`]: RK4 ground truth, noisy sampling, ZOH discretization.
//! - [`l2nw_oracle`]: L2-regularized Nadaraya-Watson oracle, sample cover
//!   check, bias bound and model rollouts.
//! - [`observability`]: PBH rank diagnostic.

pub mod error;
pub mod kernels;
pub mod l2nw_oracle;
pub mod lpr_filter;
pub mod observability;
pub mod system_sim;

pub use error::{Error, Result};
pub use kernels::{Kernel, KernelSpec, KernelTable};
pub use lpr_filter::{FilterBank, NoiseBounds, SamplingScheme, Side};
pub use system_sim::{SystemModel, Trajectory};

pub use nalgebra::{DMatrix, DVector};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
