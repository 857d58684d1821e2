//! Command-line error type with the exit-code split between configuration
//! problems and runtime failures.

use std::fmt;

/// Anything that can stop a command.
///
/// `Config` covers bad flags, bad settings files, and unusable paths and
/// maps to exit code 2; `Run` covers failures while processing (a stage
/// erroring out, unreadable artifacts, malformed data) and maps to exit
/// code 1.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Run(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Run(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration error: {msg}"),
            CliError::Run(msg) => write!(f, "{msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<fcurve::Error> for CliError {
    fn from(e: fcurve::Error) -> Self {
        CliError::Run(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Run(format!("JSON error: {e}"))
    }
}
