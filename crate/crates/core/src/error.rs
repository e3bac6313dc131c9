use thiserror::Error;

use crate::expr::ExprError;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors surfaced by model construction, discretization and the solvers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {message}")]
    InvalidParameter { name: &'static str, message: String },

    #[error("observable is negative or non-finite at x = {x}: {value}")]
    InvalidObservable { x: f64, value: f64 },

    #[error("initial law not supported for this model: {0}")]
    UnsupportedInitialLaw(String),

    #[error("kernel has no density: {0}")]
    NoDensity(String),

    #[error("grid [{lo}, {hi}] holds less than 1 - 1e-6 of the stationary mass; use xmax >= {required}")]
    GridTooSmall { lo: f64, hi: f64, required: f64 },

    #[error("power iteration did not converge in {iterations} iterations (last ratio oscillation {oscillation:e})")]
    NotConverged { iterations: usize, oscillation: f64 },

    #[error("no spectral gap: second eigenvalue modulus {sub_modulus:e} >= r = {r:e}")]
    NoSpectralGap { r: f64, sub_modulus: f64 },

    #[error("Perron positivity violated: {0}")]
    NotPositive(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("multiplicative ergodicity violated: {0}")]
    ErgodicityViolated(String),

    #[error("oracle does not apply: {0}")]
    OracleMismatch(String),

    #[error("root bracket invalid: {0}")]
    InvalidBracket(String),

    #[error("expression error: {0}")]
    Expression(#[from] ExprError),

    #[error("{0}")]
    Config(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            message: message.into(),
        }
    }

    /// Short machine-readable tag used by the CLI error stream.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::InvalidObservable { .. } => "invalid_observable",
            Error::UnsupportedInitialLaw(_) => "unsupported_initial_law",
            Error::NoDensity(_) => "no_density",
            Error::GridTooSmall { .. } => "grid_too_small",
            Error::NotConverged { .. } => "not_converged",
            Error::NoSpectralGap { .. } => "no_spectral_gap",
            Error::NotPositive(_) => "not_positive",
            Error::Precondition(_) => "precondition",
            Error::ErgodicityViolated(_) => "ergodicity_violated",
            Error::OracleMismatch(_) => "oracle_mismatch",
            Error::InvalidBracket(_) => "invalid_bracket",
            Error::Expression(_) => "expression",
            Error::Config(_) => "config",
        }
    }
}
