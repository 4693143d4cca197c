use thiserror::Error;

/// Errors raised by the analysis and simulation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("no sign change found while bracketing {what}")]
    NoBracket { what: &'static str },

    #[error("ratio {ratio} is outside the low-ratio regime (must be < 1/2)")]
    OutOfRegime { ratio: f64 },

    #[error("quadrature did not converge: relative error {achieved:e} after {panels} panels")]
    QuadratureNotConverged { achieved: f64, panels: usize },

    #[error("service cannot sustain a positive arrival rate at theta = {theta}")]
    Unstable { theta: f64 },

    #[error("no positive root: arrivals exceed the handover-penalized capacity")]
    NoPositiveRoot,

    #[error("power iteration did not converge after {iterations} iterations")]
    PowerIterationNotConverged { iterations: usize },

    #[error("no admissible theta for c = {c}")]
    EmptyDomain { c: f64 },

    #[error("every candidate c is infeasible")]
    AllInfeasible,

    #[error("only {count} exceedances in the tail (need at least {needed})")]
    InsufficientTail { count: usize, needed: usize },

    #[error("configuration error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for errors caused by a malformed configuration rather than a
    /// numerical failure.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config { .. } | Error::InvalidParameter { .. })
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
