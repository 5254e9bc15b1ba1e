use thiserror::Error;

pub type Result<T> = std::result::Result<T, GmfError>;

#[derive(Debug, Error)]
pub enum GmfError {
    #[error("dimension mismatch: expected length {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("shifted Gram system is singular or too ill-conditioned at xi = {xi}")]
    SingularShift { xi: f64 },

    #[error("iterative solve did not converge: relative residual {residual:e} after {iterations} iterations")]
    NoConvergence { residual: f64, iterations: usize },

    #[error("invalid interval [{lo}, {hi}]")]
    InvalidInterval { lo: f64, hi: f64 },

    #[error("unknown function `{0}`")]
    UnknownFunction(String),

    #[error("function `{name}` is undefined at {z}")]
    FunctionUndefined { name: String, z: f64 },

    #[error("pole {pole} lies inside the spectral interval [{lo}, {hi}]")]
    PoleInSpectrum { pole: f64, lo: f64, hi: f64 },

    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("constant unavailable: {0}")]
    ConstantUnavailable(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse failure classes, used by the command line driver for exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Validation,
    Solver,
    Io,
}

impl GmfError {
    pub fn category(&self) -> ErrorCategory {
        match self {
            GmfError::SingularShift { .. } | GmfError::NoConvergence { .. } => ErrorCategory::Solver,
            GmfError::Io(_) => ErrorCategory::Io,
            _ => ErrorCategory::Validation,
        }
    }
}
