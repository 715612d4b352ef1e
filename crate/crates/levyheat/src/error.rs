use thiserror::Error;

/// Crate-wide error type. The CLI maps variants onto process exit codes:
/// assumption failures -> 2, tolerance/resolution failures -> 3,
/// series divergence -> 4, everything else -> 1.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("quadrature did not converge: {message} (error estimate {estimate:.3e})")]
    Quadrature { message: String, estimate: f64 },

    #[error("flow integration produced a non-finite state at t = {time}")]
    Integration { time: f64 },

    #[error("resolution failure: {0}")]
    Resolution(String),

    #[error("precision failure: {0}")]
    Precision(String),

    #[error("assumption validation failed: {0}")]
    Assumption(String),

    #[error("parametrix series diverges: norm history {norms:?}")]
    Divergence { norms: Vec<f64> },

    #[error("sample coverage too low: {covered:.4} < {required:.4}; widen the grid")]
    Coverage { covered: f64, required: f64 },

    #[error("query outside the grid; evaluate the tail with the bound profile instead: {0}")]
    OutOfDomain(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Exit code for the CLI contract.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Assumption(_) => 2,
            Error::Quadrature { .. }
            | Error::Resolution(_)
            | Error::Precision(_)
            | Error::Coverage { .. } => 3,
            Error::Divergence { .. } => 4,
            _ => 1,
        }
    }
}
