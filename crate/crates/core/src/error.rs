//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter count mismatch: expected {expected}, got {got}")]
    ParamCountMismatch { expected: usize, got: usize },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("derivative request out of bounds: x_order={x_order} (max 3), t_order={t_order} (max 1)")]
    InvalidDerivativeRequest { x_order: u8, t_order: u8 },

    #[error("jet is missing required derivative {name}")]
    MissingDerivative { name: &'static str },

    #[error("finite-difference step must be positive, got {0}")]
    InvalidStep(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("relative L2 undefined: reference field has zero norm")]
    ZeroDenominator,

    #[error("loss history: {0}")]
    History(String),

    #[error("gradient alignment undefined for a zero-magnitude vector")]
    ZeroVector,

    #[error("config error: {0}")]
    Config(String),

    #[error("training diverged at epoch {epoch}: {context}")]
    Divergence { epoch: usize, context: String },

    #[error("solver instability: {0}")]
    Instability(String),

    #[error("verification failed: {0}")]
    Verification(String),

    #[error("bad file {path}: {reason}")]
    Format { path: String, reason: String },

    #[error("pde spec hash mismatch: checkpoint has {checkpoint}, config describes {config}")]
    SpecHashMismatch { checkpoint: String, config: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 2 config, 3 divergence, 4 verification.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) => 2,
            Error::Divergence { .. } => 3,
            Error::Verification(_) | Error::SpecHashMismatch { .. } | Error::Instability(_) => 4,
            _ => 1,
        }
    }
}
