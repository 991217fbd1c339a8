//! Error taxonomy shared by every module in the crate.

use thiserror::Error;

/// Unified error type. Variants map onto the failure classes the
/// operations can hit: shape/contract violations are caller bugs,
/// numeric/divergence/geometry failures are data-dependent, and
/// config/integrity/version errors come from external inputs.
#[derive(Debug, Error)]
pub enum Error {
    /// Operand dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A documented precondition was violated by the caller.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A computation produced or encountered non-finite values.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// An iterative scheme failed its convergence guarantee.
    #[error("divergence: {0}")]
    Divergence(String),

    /// Metric-tensor or geodesic machinery failed at a specific point.
    #[error("geometry failure: {0}")]
    Geometry(String),

    /// Geodesic integration left the finite domain.
    #[error("blow-up during integration, last valid t = {last_valid_t}")]
    BlowUp { last_valid_t: f64 },

    /// The training loop aborted.
    #[error("training failure: {0}")]
    Training(String),

    /// Invalid run configuration.
    #[error("config error: {0}")]
    Config(String),

    /// Checkpoint payload failed its CRC or was truncated.
    #[error("checkpoint integrity: {0}")]
    Integrity(String),

    /// Checkpoint magic or format version is not ours.
    #[error("checkpoint version: {0}")]
    Version(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
