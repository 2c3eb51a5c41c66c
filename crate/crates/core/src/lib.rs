//! Numerical laboratory for multi-dimensional screening: discretized type
//! distributions, sufficient and necessary conditions for optimality of
//! uniform and grand-bundle pricing, amortized virtual-value fields, simple
//! pricing rules, and an exact LP oracle for small discrete instances.

pub mod amort;
pub mod conditions;
pub mod dist;
pub mod numeric;
pub mod oracle;
pub mod pricing;
pub mod report;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("density is not normalizable: {0}")]
    NonNormalizable(String),
    #[error("curve leaves the support: {0}")]
    CurveOutsideSupport(String),
    #[error("degenerate conditioning: {0}")]
    Degenerate(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("linear program failed: {0}")]
    Solver(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
