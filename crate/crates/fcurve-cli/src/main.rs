//! Command-line front end for the curve-registration pipeline.
//!
//! Subcommands expose each phase on its own (`simulate`, `register`,
//! `fpca`, `test`, `plot`) plus the end-to-end `pipeline`. Flags override a
//! flat key=value settings file, which overrides the defaults. Exit codes:
//! 0 success, 1 a stage or artifact failure, 2 a configuration problem.
//! The `FCURVE_LOG` environment variable sets log verbosity.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fcurve::fd::{write_trials, Delay};
use fcurve::synthgen::{generate, GroupEffect, ScenarioSpec, TemplateFamily, WarpFamily};

use fcurve_cli::config::{self, resolve, Overrides};
use fcurve_cli::error::CliError;
use fcurve_cli::{artifacts, stages};

#[derive(Parser)]
#[command(
    name = "fcurve",
    version,
    about = "Registration, decomposition, and group testing of binary-trial curves"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic trials with known ground truth.
    Simulate(SimulateArgs),
    /// Register each delay stage and write curve tables.
    Register(Overrides),
    /// Weight search, bivariate decomposition, and modes tables.
    Fpca(Overrides),
    /// Permutation tests on the registered curve sets.
    Test(Overrides),
    /// Everything: register, decompose, test, manifest, plots.
    Pipeline(Overrides),
    /// Render plots from existing tables.
    Plot(Overrides),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Directory for trials.csv and truth.csv.
    #[arg(long)]
    out: PathBuf,
    /// Subjects in group L.
    #[arg(long, default_value_t = 17)]
    nl: usize,
    /// Subjects in group C.
    #[arg(long, default_value_t = 16)]
    nc: usize,
    /// Trials per subject and delay.
    #[arg(long, default_value_t = 2022)]
    trials: usize,
    /// Template: sigmoid:rate,floor,ceiling | constant:p | bump:center,width,height.
    #[arg(long, default_value = "sigmoid:10,0.5,0.9")]
    template: String,
    /// Warp family: identity | power:min,max | logistic-time:min,max.
    #[arg(long, default_value = "power:0.6,1.7")]
    warps: String,
    /// Log-odds shift added to group L's template.
    #[arg(long, default_value_t = 0.0)]
    amplitude_shift: f64,
    /// Phase shift applied to group L's warps.
    #[arg(long, default_value_t = 0.0)]
    phase_shift: f64,
    /// Comma-separated delays to generate.
    #[arg(long, default_value = "0,2,4,8,16")]
    stages: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("FCURVE_LOG", "warn"))
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: one or more stages failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<bool, CliError> {
    match cli.command {
        Command::Simulate(args) => {
            simulate(&args)?;
            Ok(true)
        }
        Command::Register(flags) => stages::register_command(&resolve(&flags, true)?),
        Command::Fpca(flags) => stages::fpca_command(&resolve(&flags, false)?),
        Command::Test(flags) => stages::test_command(&resolve(&flags, false)?),
        Command::Pipeline(flags) => stages::pipeline_command(&resolve(&flags, true)?),
        Command::Plot(flags) => stages::plot_command(&resolve(&flags, false)?),
    }
}

/// Generates the requested scenario once per delay (each delay on its own
/// seed stream) and writes the combined trial file plus a ground-truth
/// sidecar table.
fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let template = parse_template(&args.template)?;
    let warps = parse_warps(&args.warps)?;
    let delays = config::parse_stages(&args.stages)?;
    std::fs::create_dir_all(&args.out).map_err(|e| {
        CliError::Config(format!(
            "cannot create output directory {}: {e}",
            args.out.display()
        ))
    })?;

    let mut all_series = Vec::new();
    let mut truth_csv = String::from("delay,set,subject_id,group,s,value\n");
    for seconds in &delays {
        let delay = Delay::from_seconds(*seconds).expect("stages were validated");
        let spec = ScenarioSpec {
            n_l: args.nl,
            n_c: args.nc,
            trials_per_subject: args.trials,
            template,
            warps,
            group_effect: GroupEffect {
                amplitude_logit_shift: args.amplitude_shift,
                phase_shift: args.phase_shift,
            },
            delay,
            seed: args.seed.wrapping_add(u64::from(*seconds)),
        };
        let (series, truth) = generate(&spec)?;
        all_series.extend(series);

        for (set, values) in [("probability", &truth.probability), ("warp", &truth.warps)] {
            for (i, id) in truth.subject_ids.iter().enumerate() {
                for (j, s) in truth.grid.points().iter().enumerate() {
                    let _ = writeln!(
                        truth_csv,
                        "{seconds},{set},{id},{},{s},{}",
                        truth.labels[i],
                        values[[i, j]]
                    );
                }
            }
        }
    }

    let mut trial_bytes = Vec::new();
    write_trials(&mut trial_bytes, &all_series)?;
    let trials_path = args.out.join("trials.csv");
    artifacts::write_atomic(&trials_path, &trial_bytes)?;
    artifacts::write_atomic(&args.out.join("truth.csv"), truth_csv.as_bytes())?;
    println!(
        "wrote {} series across {} delays to {}",
        all_series.len(),
        delays.len(),
        trials_path.display()
    );
    Ok(())
}

fn split_params(text: &str, what: &str, expected: usize) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != expected {
        return Err(CliError::Config(format!(
            "{what} needs {expected} parameters, got {:?}",
            text
        )));
    }
    parts
        .iter()
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|e| CliError::Config(format!("bad {what} parameter {p:?}: {e}")))
        })
        .collect()
}

fn parse_template(text: &str) -> Result<TemplateFamily, CliError> {
    let (name, params) = text.split_once(':').unwrap_or((text, ""));
    match name {
        "sigmoid" => {
            let p = split_params(params, "sigmoid", 3)?;
            Ok(TemplateFamily::Sigmoid {
                rate: p[0],
                floor: p[1],
                ceiling: p[2],
            })
        }
        "constant" => {
            let p = split_params(params, "constant", 1)?;
            Ok(TemplateFamily::Constant { p: p[0] })
        }
        "bump" => {
            let p = split_params(params, "bump", 3)?;
            Ok(TemplateFamily::Bump {
                center: p[0],
                width: p[1],
                height: p[2],
            })
        }
        other => Err(CliError::Config(format!("unknown template {other:?}"))),
    }
}

fn parse_warps(text: &str) -> Result<WarpFamily, CliError> {
    let (name, params) = text.split_once(':').unwrap_or((text, ""));
    match name {
        "identity" => Ok(WarpFamily::Identity),
        "power" => {
            let p = split_params(params, "power", 2)?;
            Ok(WarpFamily::Power { min: p[0], max: p[1] })
        }
        "logistic-time" => {
            let p = split_params(params, "logistic-time", 2)?;
            Ok(WarpFamily::LogisticTime { min: p[0], max: p[1] })
        }
        other => Err(CliError::Config(format!("unknown warp family {other:?}"))),
    }
}
