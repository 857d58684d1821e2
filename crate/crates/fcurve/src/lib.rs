//! Functional analysis of repeated binary-trial data.
//!
//! The crate estimates smooth success-probability curves from per-trial
//! binary outcomes, separates amplitude from timing (phase) via curve
//! registration, summarizes joint amplitude/phase variation with a weighted
//! bivariate functional PCA, and compares groups with permutation tests,
//! both global and interval-wise. A synthetic-data generator with known
//! ground truth supports calibration and recovery studies.

pub mod basis;
pub mod diag;
pub mod error;
pub mod fd;
pub mod fpca;
pub mod inference;
pub mod registration;
pub mod report;
pub mod synthgen;
pub mod transforms;

pub use error::{Error, Result};

/// Library version, recorded in run manifests for reproducibility.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
