use thiserror::Error;

/// Errors raised by the simulation and analysis routines.
#[derive(Debug, Error)]
pub enum Error {
    /// An input value violates a documented invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// A run configuration cannot be executed as requested (step sizes,
    /// timing layout, sampling).
    #[error("configuration error: {0}")]
    Config(String),

    #[error("fidelity is undefined for a zero-trace state")]
    UndefinedFidelity,

    #[error("trace mismatch: {0} vs {1}")]
    TraceMismatch(f64, f64),

    /// Projection data whose Bloch vector is too long to be a physical state.
    #[error("inconsistent tomography data: Bloch vector length {0:.4} exceeds 1.05")]
    InconsistentData(f64),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("fit did not converge after {iterations} iterations (last relative step {last_step:.3e}, rss {rss:.3e})")]
    FitFailure {
        iterations: usize,
        last_step: f64,
        rss: f64,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad inputs rather than numerical trouble.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Validation(_) | Error::Config(_) | Error::Parse(_) | Error::TraceMismatch(..)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
