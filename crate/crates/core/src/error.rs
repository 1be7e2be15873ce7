use thiserror::Error;

use crate::model::ValidationReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("stability index alpha = {0} is not supported (expected 0 < alpha < 1 or 1 < alpha <= 2)")]
    InvalidAlpha(f64),
    #[error("skewness beta = {0} outside [-1, 1]")]
    InvalidBeta(f64),
    #[error("scale must be positive and finite, got {0}")]
    InvalidScale(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("asymmetric noise (beta = {0}) has no compound-Poisson Marcus scheme; only beta = 0 is supported")]
    AsymmetricJumps(f64),
    #[error("scheme {scheme} cannot integrate a {interpretation} SDE")]
    IncompatibleScheme {
        scheme: &'static str,
        interpretation: &'static str,
    },
    #[error("closed-form Marcus step requested but the SDE carries no Marcus map")]
    MissingMarcusMap,
    #[error("system failed validation:\n{0}")]
    Validation(ValidationReport),
    #[error("non-finite state at t = {time} (last finite value {last_good:e} at t = {last_good_time})")]
    NonFinite { time: f64, last_good: f64, last_good_time: f64 },
    #[error("quadrature did not converge: estimated error {estimate:e} above tolerance {tolerance:e}")]
    Quadrature { estimate: f64, tolerance: f64 },
    #[error("empty sample")]
    EmptySample,
    #[error("invalid expression `{expr}`: {reason}")]
    Expression { expr: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
