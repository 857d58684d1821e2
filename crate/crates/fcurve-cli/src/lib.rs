//! Implementation of the `fcurve` command-line pipeline.
//!
//! The binary in `main.rs` is a thin argument layer over these modules:
//! [`config`] resolves settings, [`stages`] runs the per-delay phases,
//! [`tables`] defines the delimited artifacts, [`plots`] renders SVG from
//! those artifacts, and [`artifacts`] handles atomic writes and the run
//! manifest. Exposed as a library so integration tests can read the same
//! tables the binary writes.

pub mod artifacts;
pub mod config;
pub mod error;
pub mod plots;
pub mod stages;
pub mod svg;
pub mod tables;
