//! Artifact bookkeeping: atomic writes, stage file naming, the input
//! digest, and the run manifest.

use std::path::{Path, PathBuf};

use fcurve::fd::Delay;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;
use crate::error::CliError;

/// Writes `bytes` to `path` atomically: the content lands in a sibling
/// temporary file that is renamed over the target, so a concurrent reader
/// never observes a partial file and reruns overwrite in place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let tmp = temp_path(path);
    std::fs::write(&tmp, bytes)
        .and_then(|()| std::fs::rename(&tmp, path))
        .map_err(|e| CliError::Run(format!("cannot write {}: {e}", path.display())))
}

fn temp_path(path: &Path) -> PathBuf {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "artifact".into());
    path.with_file_name(format!(".{name}.tmp"))
}

/// Serializes `value` as pretty JSON with a trailing newline and writes it
/// atomically.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// Reads a JSON artifact, naming the file in every failure.
pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Run(format!("missing artifact {}: {e}", path.display())))?;
    serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Run(format!("malformed artifact {}: {e}", path.display())))
}

/// Path of a per-stage artifact, e.g. `curves_d4.csv` for kind `curves`,
/// delay 4, extension `csv`.
pub fn stage_path(dir: &Path, kind: &str, delay: Delay, ext: &str) -> PathBuf {
    dir.join(format!("{kind}_d{}.{ext}", delay.seconds()))
}

/// `sha256:<hex>` digest of raw bytes.
pub fn digest(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    format!("sha256:{:x}", hasher.finalize())
}

/// One artifact the manifest points at.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArtifactEntry {
    /// What the artifact is, e.g. `registration` or `global_test:warp_clr`.
    pub kind: String,
    /// File name relative to the artifact directory.
    pub file: String,
}

impl ArtifactEntry {
    pub fn new(kind: impl Into<String>, path: &Path) -> Self {
        ArtifactEntry {
            kind: kind.into(),
            file: path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
        }
    }
}

/// Outcome of one delay stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageManifest {
    pub delay: u8,
    /// `ok`, or `failed: <reason>`; failed stages list no artifacts.
    pub status: String,
    pub artifacts: Vec<ArtifactEntry>,
}

impl StageManifest {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

/// Versions of the analysis library and the command-line front end.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Versions {
    pub fcurve: String,
    pub cli: String,
}

impl Versions {
    pub fn current() -> Self {
        Versions {
            fcurve: fcurve::VERSION.to_string(),
            cli: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

/// The run manifest: everything needed to reproduce the run bit for bit
/// (settings echo, seed inside it, input digest, versions) plus the
/// per-stage outcomes. Deliberately free of timestamps so reruns compare
/// byte-identical.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub config: PipelineConfig,
    pub input_digest: String,
    pub versions: Versions,
    pub stages: Vec<StageManifest>,
}
