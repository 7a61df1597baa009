//! Crate-wide error type.
//!
//! Variants are grouped by how the batch harness maps them to exit codes:
//! configuration and domain violations exit with 2, numerical failures
//! (blow-up, unreachable tolerance, failed convergence) exit with 3.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Parameter or state outside the admissible domain.
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// A configuration file or CLI argument failed validation.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// The requested operation needs a different regime of the coefficients.
    #[error("not applicable: {0}")]
    NotApplicable(String),

    /// A path or trajectory does not cover the requested time window.
    #[error("insufficient coverage: {0}")]
    Coverage(String),

    /// Time grid mismatch (non-integer step ratio, off-grid shift, ...).
    #[error("grid mismatch: {0}")]
    Grid(String),

    /// State norm exceeded the guard threshold during integration.
    #[error("blow-up at t = {t}: state norm exceeded {guard:e}")]
    BlowUp { t: f64, guard: f64 },

    /// Step halving hit its limit before reaching the requested tolerance.
    #[error("step underflow: achieved drift {achieved:e}, requested {requested:e}")]
    StepUnderflow { achieved: f64, requested: f64 },

    /// An iterative search (bisection, pull-back, return map) did not settle.
    #[error("no convergence: {0}")]
    NoConvergence(String),

    /// Analytic classification and numerical validation disagree.
    #[error("diagnostic inconsistency: {0}")]
    Diagnostic(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Exit code for the batch harness: 2 for validation, 3 for numerics.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParams(_)
            | Error::InvalidConfig(_)
            | Error::NotApplicable(_)
            | Error::Coverage(_)
            | Error::Grid(_) => 2,
            Error::BlowUp { .. }
            | Error::StepUnderflow { .. }
            | Error::NoConvergence(_)
            | Error::Diagnostic(_) => 3,
            Error::Io(_) | Error::Json(_) => 3,
        }
    }
}
