use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("kernel is degenerate: {0}")]
    DegenerateKernel(String),

    /// The local polynomial fit is singular or too ill-conditioned at this
    /// bandwidth; a larger bandwidth is needed.
    #[error("bandwidth {h} too small for order {order} (condition number {cond:.3e})")]
    BandwidthTooSmall { h: f64, order: usize, cond: f64 },

    #[error("incomplete measurement window: expected {expected} samples, got {got}")]
    IncompleteWindow { expected: usize, got: usize },

    #[error("state diverged at t = {t}")]
    Divergence { t: f64 },

    #[error("data error: {0}")]
    Data(String),
}

pub type Result<T> = std::result::Result<T, Error>;
