use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the library.
///
/// Variants are grouped by [`ErrorKind`] so the command line front end can map
/// them to process exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("grid mismatch: {left} vs {right}")]
    GridMismatch { left: String, right: String },

    #[error("semiclassical parameter mismatch: {left} vs {right}")]
    EpsMismatch { left: f64, right: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("axis {axis} out of range for dimension {dim}")]
    AxisOutOfRange { axis: usize, dim: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("unsupported dimension {0}")]
    UnsupportedDimension(usize),

    #[error("derivative order {0} not supported (max 4)")]
    UnsupportedOrder(usize),

    #[error("wave function is not normalized (norm = {norm})")]
    NotNormalized { norm: f64 },

    #[error("matrix is singular or ill-conditioned (condition estimate {condition:e})")]
    SingularMatrix { condition: f64 },

    #[error("grid does not resolve the wave function: {0}")]
    Unresolved(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("missing parent index {0} in basis")]
    MissingIndex(String),

    #[error("step size too large: arg det Q jumped by {jump:.3} rad at t = {t:.6}; refine dt")]
    BranchJump { jump: f64, t: f64 },

    #[error("symplectic invariant drift {drift:e} exceeds tolerance at t = {t:.6}")]
    InvariantDrift { drift: f64, t: f64 },

    #[error("norm drift {drift:e} exceeds tolerance at t = {t:.6}")]
    NormDrift { drift: f64, t: f64 },

    #[error("refinement budget exhausted after {iterations} refinements (last achieved tolerance {achieved:e})")]
    RefinementBudget { iterations: usize, achieved: f64 },

    #[error("insufficient data: {usable} usable points, need at least 3")]
    InsufficientData { usable: usize },

    #[error("time mismatch: {0}")]
    TimeMismatch(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {path}: {message}")]
    Format { path: PathBuf, message: String },
}

/// Coarse classification used for exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Numerical,
    Io,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Context { source, .. } => source.kind(),
            Error::Io { .. } | Error::Format { .. } => ErrorKind::Io,
            Error::GridMismatch { .. }
            | Error::EpsMismatch { .. }
            | Error::InvalidGrid(_)
            | Error::AxisOutOfRange { .. }
            | Error::DimensionMismatch { .. }
            | Error::UnsupportedDimension(_)
            | Error::UnsupportedOrder(_)
            | Error::InvalidConfig(_)
            | Error::MissingIndex(_)
            | Error::TimeMismatch(_) => ErrorKind::Validation,
            Error::NotNormalized { .. }
            | Error::SingularMatrix { .. }
            | Error::Unresolved(_)
            | Error::BranchJump { .. }
            | Error::InvariantDrift { .. }
            | Error::NormDrift { .. }
            | Error::RefinementBudget { .. }
            | Error::InsufficientData { .. } => ErrorKind::Numerical,
        }
    }

    pub fn context(self, context: impl Into<String>) -> Error {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Error {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Adds a context message to the error of a `Result`.
pub trait ResultExt<T> {
    fn context(self, context: impl FnOnce() -> String) -> Result<T>;
}

impl<T> ResultExt<T> for Result<T> {
    fn context(self, context: impl FnOnce() -> String) -> Result<T> {
        self.map_err(|e| e.context(context()))
    }
}
