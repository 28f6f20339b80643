use thiserror::Error;

/// Errors reported by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("quadrature did not converge: achieved error {achieved:e} against tolerance {requested:e}")]
    QuadratureNonConvergence { achieved: f64, requested: f64 },

    #[error("time step {dt} violates the stability limit {limit}")]
    Cfl { dt: f64, limit: f64 },

    #[error("singular linear system at row {row} (pivot {pivot:e})")]
    SingularSystem { row: usize, pivot: f64 },

    #[error("simulation horizon too short: {fraction:.4} of paths did not exit")]
    HorizonTooShort { fraction: f64 },

    #[error("non-finite value produced at step {step}")]
    NonFinite { step: usize },

    #[error("malformed network: {0}")]
    Network(String),

    #[error("parse error on line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name, reason: reason.into() }
}

pub(crate) fn ensure_positive(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(invalid(name, format!("must be finite and > 0, got {value}")))
    }
}
