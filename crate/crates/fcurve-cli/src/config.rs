//! Pipeline settings: defaults, flat key=value files, and flag overrides.
//!
//! Resolution order is defaults, then the `--config` file, then explicit
//! command-line flags, so a settings file can pin a run while flags tweak
//! single values on top.

use std::path::{Path, PathBuf};

use clap::Args;
use fcurve::fd::Delay;
use fcurve::fpca::default_weight_grid;
use fcurve::registration::RegistrationConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Fully resolved settings for a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Trial CSV to ingest.
    pub input: PathBuf,
    /// Artifact directory; created if absent.
    pub out: PathBuf,
    /// Delay stages to process, in seconds, sorted and deduplicated.
    pub stages: Vec<u8>,
    pub registration: RegistrationConfig,
    /// Number of components kept in the bivariate decomposition.
    pub components: usize,
    /// Candidate phase weights for the reconstruction search.
    pub d_grid: Vec<f64>,
    /// Permutations per test.
    pub permutations: usize,
    /// Test level.
    pub alpha: f64,
    /// Base seed; stages derive their own streams from it.
    pub seed: u64,
    /// Whether the pipeline renders plots after writing tables.
    pub plots: bool,
}

impl PipelineConfig {
    pub fn stage_delays(&self) -> Vec<Delay> {
        self.stages
            .iter()
            .map(|s| Delay::from_seconds(*s).expect("stages were validated"))
            .collect()
    }

    /// Registration settings for one stage: the shared config with the
    /// stage's own seed stream.
    pub fn stage_registration(&self, delay: Delay) -> RegistrationConfig {
        let mut reg = self.registration.clone();
        reg.seed = self.stage_seed(delay);
        reg
    }

    /// Per-stage seed: the base seed offset by the delay so stages draw
    /// distinct, reproducible streams.
    pub fn stage_seed(&self, delay: Delay) -> u64 {
        self.seed.wrapping_add(u64::from(delay.seconds()))
    }
}

/// Command-line overrides shared by the processing subcommands. Every flag
/// is optional; unset flags fall back to the settings file and defaults.
#[derive(Args, Debug, Clone, Default)]
pub struct Overrides {
    /// Trial CSV to ingest.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Artifact directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated delay stages, a subset of 0,2,4,8,16.
    #[arg(long)]
    pub stages: Option<String>,
    /// Base seed for registration and permutation streams.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Permutations per test.
    #[arg(long)]
    pub permutations: Option<usize>,
    /// Test level in (0, 1).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Phase-weight search grid as start:step:end.
    #[arg(long = "d-grid")]
    pub d_grid: Option<String>,
    /// Amplitude spline dimension.
    #[arg(long)]
    pub ka: Option<usize>,
    /// Warp spline dimension.
    #[arg(long)]
    pub kp: Option<usize>,
    /// Components kept in the bivariate decomposition.
    #[arg(long)]
    pub components: Option<usize>,
    /// Skip plot rendering in the pipeline.
    #[arg(long)]
    pub no_plots: bool,
    /// Flat key=value settings file applied before flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Partially specified settings collected from the file and the flags.
#[derive(Debug, Default)]
struct Partial {
    input: Option<PathBuf>,
    out: Option<PathBuf>,
    stages: Option<Vec<u8>>,
    seed: Option<u64>,
    permutations: Option<usize>,
    alpha: Option<f64>,
    d_grid: Option<Vec<f64>>,
    ka: Option<usize>,
    kp: Option<usize>,
    components: Option<usize>,
    plots: Option<bool>,
}

impl Partial {
    fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("cannot read settings file {}: {e}", path.display()))
        })?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!(
                    "{} line {}: expected key=value, got {raw:?}",
                    path.display(),
                    lineno + 1
                ))
            })?;
            self.apply_pair(key.trim(), value.trim())
                .map_err(|e| match e {
                    CliError::Config(msg) => {
                        CliError::Config(format!("{} line {}: {msg}", path.display(), lineno + 1))
                    }
                    other => other,
                })?;
        }
        Ok(())
    }

    fn apply_pair(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match key {
            "input" => self.input = Some(PathBuf::from(value)),
            "out" => self.out = Some(PathBuf::from(value)),
            "stages" => self.stages = Some(parse_stages(value)?),
            "seed" => self.seed = Some(parse_number(key, value)?),
            "permutations" => self.permutations = Some(parse_number(key, value)?),
            "alpha" => self.alpha = Some(parse_number(key, value)?),
            "d_grid" => self.d_grid = Some(parse_d_grid(value)?),
            "ka" => self.ka = Some(parse_number(key, value)?),
            "kp" => self.kp = Some(parse_number(key, value)?),
            "components" => self.components = Some(parse_number(key, value)?),
            "plots" => {
                self.plots = Some(match value {
                    "true" => true,
                    "false" => false,
                    other => {
                        return Err(CliError::Config(format!(
                            "plots must be true or false, got {other:?}"
                        )))
                    }
                })
            }
            other => return Err(CliError::Config(format!("unknown settings key {other:?}"))),
        }
        Ok(())
    }

    fn apply_flags(&mut self, flags: &Overrides) -> Result<(), CliError> {
        if let Some(v) = &flags.input {
            self.input = Some(v.clone());
        }
        if let Some(v) = &flags.out {
            self.out = Some(v.clone());
        }
        if let Some(v) = &flags.stages {
            self.stages = Some(parse_stages(v)?);
        }
        if let Some(v) = flags.seed {
            self.seed = Some(v);
        }
        if let Some(v) = flags.permutations {
            self.permutations = Some(v);
        }
        if let Some(v) = flags.alpha {
            self.alpha = Some(v);
        }
        if let Some(v) = &flags.d_grid {
            self.d_grid = Some(parse_d_grid(v)?);
        }
        if let Some(v) = flags.ka {
            self.ka = Some(v);
        }
        if let Some(v) = flags.kp {
            self.kp = Some(v);
        }
        if let Some(v) = flags.components {
            self.components = Some(v);
        }
        if flags.no_plots {
            self.plots = Some(false);
        }
        Ok(())
    }

    fn build(self, need_input: bool) -> Result<PipelineConfig, CliError> {
        let out = self
            .out
            .ok_or_else(|| CliError::Config("no output directory given (--out)".into()))?;
        let input = match self.input {
            Some(p) => p,
            None if need_input => {
                return Err(CliError::Config("no input file given (--input)".into()))
            }
            None => PathBuf::new(),
        };
        let mut registration = RegistrationConfig::default();
        if let Some(ka) = self.ka {
            registration.k_a = ka;
        }
        if let Some(kp) = self.kp {
            registration.k_p = kp;
        }
        let seed = self.seed.unwrap_or(0);
        registration.seed = seed;
        registration
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        let alpha = self.alpha.unwrap_or(0.05);
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(CliError::Config(format!(
                "alpha must lie strictly between 0 and 1, got {alpha}"
            )));
        }
        let permutations = self.permutations.unwrap_or(1000);
        if permutations == 0 {
            return Err(CliError::Config("permutations must be positive".into()));
        }
        let components = self.components.unwrap_or(10);
        if components == 0 {
            return Err(CliError::Config("components must be positive".into()));
        }
        Ok(PipelineConfig {
            input,
            out,
            stages: self.stages.unwrap_or_else(all_stages),
            registration,
            components,
            d_grid: self.d_grid.unwrap_or_else(default_weight_grid),
            permutations,
            alpha,
            seed,
            plots: self.plots.unwrap_or(true),
        })
    }
}

fn all_stages() -> Vec<u8> {
    Delay::ALL.iter().map(|d| d.seconds()).collect()
}

/// Resolves the full configuration for a subcommand. `need_input` is false
/// for subcommands that only consume an artifact directory.
pub fn resolve(flags: &Overrides, need_input: bool) -> Result<PipelineConfig, CliError> {
    let mut partial = Partial::default();
    if let Some(path) = &flags.config {
        partial.apply_file(path)?;
    }
    partial.apply_flags(flags)?;
    partial.build(need_input)
}

fn parse_number<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| CliError::Config(format!("bad value for {key}: {e}")))
}

/// Parses a comma-separated delay list like `0,2,8` into sorted unique
/// seconds, each validated against the known delay conditions.
pub fn parse_stages(text: &str) -> Result<Vec<u8>, CliError> {
    let mut stages = Vec::new();
    for piece in text.split(',') {
        let piece = piece.trim();
        if piece.is_empty() {
            continue;
        }
        let seconds: u8 = piece
            .parse()
            .map_err(|e| CliError::Config(format!("bad stage {piece:?}: {e}")))?;
        Delay::from_seconds(seconds).map_err(|e| CliError::Config(e.to_string()))?;
        stages.push(seconds);
    }
    if stages.is_empty() {
        return Err(CliError::Config(format!("no stages in {text:?}")));
    }
    stages.sort_unstable();
    stages.dedup();
    Ok(stages)
}

/// Parses a `start:step:end` weight grid, inclusive of `end` up to a small
/// tolerance for the accumulated step.
pub fn parse_d_grid(text: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(CliError::Config(format!(
            "weight grid must be start:step:end, got {text:?}"
        )));
    }
    let start: f64 = parse_number("d-grid start", parts[0])?;
    let step: f64 = parse_number("d-grid step", parts[1])?;
    let end: f64 = parse_number("d-grid end", parts[2])?;
    if !(start > 0.0 && start.is_finite()) {
        return Err(CliError::Config(format!(
            "weight grid start must be positive, got {start}"
        )));
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(CliError::Config(format!(
            "weight grid step must be positive, got {step}"
        )));
    }
    if !(end >= start && end.is_finite()) {
        return Err(CliError::Config(format!(
            "weight grid end must be at least the start, got {end}"
        )));
    }
    let count = ((end - start) / step + 1.0 + 1e-9).floor() as usize;
    Ok((0..count).map(|i| start + i as f64 * step).collect())
}
