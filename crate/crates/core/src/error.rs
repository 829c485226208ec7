//! Error type shared by every module of the crate.

use std::path::PathBuf;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong while building grids, running solves, or
/// driving the reconstruction loop.
///
/// Variants are grouped by origin: configuration problems are the caller's to
/// fix, numerical diagnostics carry the measured quantity that triggered them.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid parameters detected before any computation started.
    #[error("configuration error: {0}")]
    Config(String),

    /// A point lies outside the computational domain.
    #[error("point ({0}, {1}) lies outside the domain")]
    OutsideDomain(f64, f64),

    /// Two objects built over different grids were combined.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// The explicit time step violates the stability bound.
    #[error("CFL number {lambda:.6} exceeds the stability bound {limit}")]
    CflViolation { lambda: f64, limit: f64 },

    /// The time stepper produced non-finite values.
    #[error("solver produced non-finite values at step {step}")]
    Instability { step: usize },

    /// A replay device was asked for a source it has never seen.
    #[error("no recorded trace for source hash {hash}")]
    ReplayMiss { hash: String },

    /// An interior snapshot was requested without the verification channel.
    #[error("interior snapshots require the verification channel to be enabled")]
    VerificationDisabled,

    /// Conjugate gradients met a non-positive curvature direction.
    #[error(
        "non-positive curvature in conjugate gradients (Rayleigh quotient {rayleigh:.6e}); \
         the regularized normal operator is not positive definite at this resolution"
    )]
    IndefiniteOperator { rayleigh: f64 },

    /// A seed profile handed to the ascent was not a member of the semilattice.
    #[error("seed profile is not a member of the volume semilattice (margin {margin:.6e})")]
    NotAMember { margin: f64 },

    /// Volume oracle answers were inconsistent along a single-node ray.
    #[error("volume oracle inconsistent along the ray of boundary node {node}")]
    OracleInconsistency { node: usize },

    /// Coordinate ascent failed to settle within the cycle budget.
    #[error("coordinate ascent did not converge within {cycles} cycles")]
    AscentStalled { cycles: usize },

    /// An input collection that must be nonempty was empty.
    #[error("empty {0}")]
    Empty(&'static str),

    /// Malformed row in a CSV input.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// Underlying I/O failure.
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
