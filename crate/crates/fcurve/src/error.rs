//! Error type shared by every module of the crate.

use thiserror::Error;

/// Errors raised by data validation, numerical routines, and ingestion.
#[derive(Debug, Error)]
pub enum Error {
    /// A trial series violates its structural invariants.
    #[error("invalid trial series: {0}")]
    InvalidSeries(String),

    /// An operation received no usable curves or series.
    #[error("empty sample: {0}")]
    EmptySample(String),

    /// Abscissae or grids do not cover the required domain.
    #[error("domain mismatch: {0}")]
    DomainMismatch(String),

    /// A least-squares fit has fewer observations than unknowns.
    #[error("underdetermined fit: {points} points for {basis} basis functions")]
    Underdetermined { points: usize, basis: usize },

    /// A warp's coefficients or values violate monotonicity.
    #[error("invalid warp: {0}")]
    InvalidWarp(String),

    /// A derivative that must be strictly positive is not.
    #[error("non-positive derivative at grid index {index}")]
    NonPositiveDerivative { index: usize },

    /// More components were requested than the data can support.
    #[error("truncation error: {0}")]
    TruncationError(String),

    /// Paired samples disagree on grid, size, or labels.
    #[error("pairing error: {0}")]
    PairingError(String),

    /// Group structure is missing or inconsistent with the plan.
    #[error("group error: {0}")]
    GroupError(String),

    /// A configuration value is out of range or unparseable.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// An underlying I/O operation failed.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// A text record could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
