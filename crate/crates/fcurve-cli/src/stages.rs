//! Per-delay stage execution and orchestration.
//!
//! Each delay condition is one independent stage: register the trials,
//! write the curve tables, run the weight search and bivariate
//! decomposition, and run the permutation tests. Stages run concurrently
//! and fail in isolation — one stage's error is recorded in its manifest
//! entry while the others complete.

use fcurve::fd::{read_trials, CurveKind, Delay, FunctionalSample, TrialSeries};
use fcurve::fpca::{fpca_bivariate, modes_of_variation, select_weight, ModesOfVariation};
use fcurve::inference::{run_test_battery, PermutationPlan};
use fcurve::registration::register;
use fcurve::report::{EigenReport, RegistrationReport};
use fcurve::transforms::inverse_logit_scalar;
use ndarray::Array2;
use rayon::prelude::*;

use crate::artifacts::{
    digest, stage_path, write_atomic, write_json, ArtifactEntry, Manifest, StageManifest, Versions,
};
use crate::config::PipelineConfig;
use crate::error::CliError;
use crate::plots::render_stage_plots;
use crate::tables;

/// Reads and parses the input trials, returning the series and the raw-byte
/// digest recorded in the manifest.
pub fn load_trials(config: &PipelineConfig) -> Result<(Vec<TrialSeries>, String), CliError> {
    let bytes = std::fs::read(&config.input).map_err(|e| {
        CliError::Config(format!(
            "cannot read input {}: {e}",
            config.input.display()
        ))
    })?;
    let digest = digest(&bytes);
    let trials = read_trials(&bytes[..])
        .map_err(|e| CliError::Run(format!("{}: {e}", config.input.display())))?;
    Ok((trials, digest))
}

fn ensure_out_dir(config: &PipelineConfig) -> Result<(), CliError> {
    std::fs::create_dir_all(&config.out).map_err(|e| {
        CliError::Config(format!(
            "cannot create output directory {}: {e}",
            config.out.display()
        ))
    })
}

/// Registration phase of one stage: fit the model on this delay's trials
/// and write the registration report plus the curve tables every later
/// phase reads.
pub fn register_stage(
    trials: &[TrialSeries],
    config: &PipelineConfig,
    delay: Delay,
) -> Result<Vec<ArtifactEntry>, CliError> {
    let data: Vec<TrialSeries> = trials
        .iter()
        .filter(|t| t.delay() == delay)
        .cloned()
        .collect();
    let reg_config = config.stage_registration(delay);
    let result = register(&data, &reg_config)?;

    let grid = result.grid();
    let n = data.len();
    let mut warp_values = Array2::zeros((n, grid.len()));
    for (i, warp) in result.warps().iter().enumerate() {
        for (j, &s) in grid.points().iter().enumerate() {
            warp_values[[i, j]] = warp.eval(s);
        }
    }
    let warp_clr = result.warp_clr_sample()?;

    let registration_path = stage_path(&config.out, "registration", delay, "json");
    write_json(&registration_path, &RegistrationReport::from_result(&result))?;

    let curves_path = stage_path(&config.out, "curves", delay, "csv");
    let csv = tables::curves_csv(
        grid,
        result.subject_ids(),
        result.labels(),
        &[
            (tables::CURVE_SETS[0], result.unaligned_logit().values()),
            (tables::CURVE_SETS[1], result.aligned_logit().values()),
            (tables::CURVE_SETS[2], &warp_values),
            (tables::CURVE_SETS[3], warp_clr.values()),
        ],
    );
    write_atomic(&curves_path, csv.as_bytes())?;

    Ok(vec![
        ArtifactEntry::new("registration", &registration_path),
        ArtifactEntry::new("curves", &curves_path),
    ])
}

/// Decomposition phase of one stage, driven entirely by the curve tables:
/// weight search against the unaligned probability curves, bivariate
/// decomposition at the selected weight, and first-two-component modes.
pub fn fpca_stage(config: &PipelineConfig, delay: Delay) -> Result<Vec<ArtifactEntry>, CliError> {
    let table = tables::read_curves(&stage_path(&config.out, "curves", delay, "csv"))?;
    let aligned = table.sample(tables::CURVE_SETS[1], CurveKind::AlignedLogit)?;
    let warp_clr = table.sample(tables::CURVE_SETS[3], CurveKind::WarpClr)?;
    let target_values = table
        .set(tables::CURVE_SETS[0])?
        .mapv(inverse_logit_scalar);
    let target = FunctionalSample::new(
        table.grid.clone(),
        target_values,
        table.labels.clone(),
        CurveKind::Probability,
    )?;

    let selection = select_weight(
        &aligned,
        &warp_clr,
        &target,
        config.components,
        &config.d_grid,
    )?;
    let system = fpca_bivariate(&aligned, &warp_clr, selection.selected, config.components)?;
    let mean_warp_clr = warp_clr.mean_curve();
    let modes: Vec<ModesOfVariation> = (1..=2.min(system.n_components()))
        .map(|c| modes_of_variation(&system, c, &mean_warp_clr))
        .collect::<Result<_, _>>()?;

    let weight_path = stage_path(&config.out, "weight", delay, "csv");
    write_atomic(&weight_path, tables::weight_csv(&selection).as_bytes())?;
    let eigen_path = stage_path(&config.out, "eigen", delay, "json");
    write_json(&eigen_path, &EigenReport::from_system(&system))?;
    let modes_path = stage_path(&config.out, "modes", delay, "csv");
    write_atomic(
        &modes_path,
        tables::modes_csv(&table.grid, &modes).as_bytes(),
    )?;

    Ok(vec![
        ArtifactEntry::new("weight_selection", &weight_path),
        ArtifactEntry::new("eigen_system", &eigen_path),
        ArtifactEntry::new("modes", &modes_path),
    ])
}

/// Testing phase of one stage: the shared permutation plan applied to the
/// three curve sets, globally and interval-wise.
pub fn test_stage(config: &PipelineConfig, delay: Delay) -> Result<Vec<ArtifactEntry>, CliError> {
    let table = tables::read_curves(&stage_path(&config.out, "curves", delay, "csv"))?;
    let unaligned = table.sample(tables::CURVE_SETS[0], CurveKind::UnalignedLogit)?;
    let aligned = table.sample(tables::CURVE_SETS[1], CurveKind::AlignedLogit)?;
    let warp_clr = table.sample(tables::CURVE_SETS[3], CurveKind::WarpClr)?;

    let plan = PermutationPlan::new(
        &table.labels,
        config.permutations,
        config.stage_seed(delay),
    )?;
    let battery = run_test_battery(&unaligned, &aligned, &warp_clr, &plan, config.alpha)?;

    let tests_path = stage_path(&config.out, "tests", delay, "csv");
    write_atomic(&tests_path, tables::tests_csv(&battery).as_bytes())?;
    let permutations_path = stage_path(&config.out, "permutations", delay, "csv");
    write_atomic(
        &permutations_path,
        tables::permutations_csv(&battery).as_bytes(),
    )?;
    let pvalues_path = stage_path(&config.out, "pvalues", delay, "csv");
    write_atomic(&pvalues_path, tables::pvalues_csv(&battery).as_bytes())?;

    let mut entries = Vec::new();
    for set in tables::TEST_SETS {
        entries.push(ArtifactEntry::new(format!("global_test:{set}"), &tests_path));
    }
    entries.push(ArtifactEntry::new("permutations", &permutations_path));
    for set in tables::TEST_SETS {
        entries.push(ArtifactEntry::new(
            format!("interval_test:{set}"),
            &pvalues_path,
        ));
    }
    Ok(entries)
}

fn full_stage(
    trials: &[TrialSeries],
    config: &PipelineConfig,
    delay: Delay,
) -> Result<Vec<ArtifactEntry>, CliError> {
    let mut entries = register_stage(trials, config, delay)?;
    entries.extend(fpca_stage(config, delay)?);
    entries.extend(test_stage(config, delay)?);
    Ok(entries)
}

/// Runs `work` for every configured stage concurrently, recording each
/// outcome; a failed stage is logged and reported but never stops the rest.
fn run_stages<F>(config: &PipelineConfig, work: F) -> Vec<StageManifest>
where
    F: Fn(Delay) -> Result<Vec<ArtifactEntry>, CliError> + Sync,
{
    config
        .stage_delays()
        .par_iter()
        .map(|&delay| match work(delay) {
            Ok(artifacts) => StageManifest {
                delay: delay.seconds(),
                status: "ok".into(),
                artifacts,
            },
            Err(e) => {
                log::error!("stage d{}: {e}", delay.seconds());
                StageManifest {
                    delay: delay.seconds(),
                    status: format!("failed: {e}"),
                    artifacts: Vec::new(),
                }
            }
        })
        .collect()
}

fn report_stages(stages: &[StageManifest]) -> bool {
    for stage in stages {
        println!("stage d{}: {}", stage.delay, stage.status);
    }
    stages.iter().all(StageManifest::is_ok)
}

/// `register` subcommand: registration phase only, per stage.
pub fn register_command(config: &PipelineConfig) -> Result<bool, CliError> {
    ensure_out_dir(config)?;
    let (trials, _) = load_trials(config)?;
    let stages = run_stages(config, |delay| register_stage(&trials, config, delay));
    Ok(report_stages(&stages))
}

/// `fpca` subcommand: decomposition phase only, from existing curve tables.
pub fn fpca_command(config: &PipelineConfig) -> Result<bool, CliError> {
    ensure_out_dir(config)?;
    let stages = run_stages(config, |delay| fpca_stage(config, delay));
    Ok(report_stages(&stages))
}

/// `test` subcommand: testing phase only, from existing curve tables.
pub fn test_command(config: &PipelineConfig) -> Result<bool, CliError> {
    ensure_out_dir(config)?;
    let stages = run_stages(config, |delay| test_stage(config, delay));
    Ok(report_stages(&stages))
}

/// `plot` subcommand: render all plots from existing tables.
pub fn plot_command(config: &PipelineConfig) -> Result<bool, CliError> {
    let stages = run_stages(config, |delay| render_stage_plots(&config.out, delay));
    Ok(report_stages(&stages))
}

/// `pipeline` subcommand: every phase, the manifest, and (unless disabled)
/// the plots.
pub fn pipeline_command(config: &PipelineConfig) -> Result<bool, CliError> {
    ensure_out_dir(config)?;
    let (trials, input_digest) = load_trials(config)?;
    let mut stages = run_stages(config, |delay| full_stage(&trials, config, delay));
    let mut all_ok = true;

    if config.plots {
        let plot_outcomes: Vec<(u8, Result<Vec<ArtifactEntry>, CliError>)> = stages
            .iter()
            .filter(|s| s.is_ok())
            .map(|s| Delay::from_seconds(s.delay).expect("validated"))
            .collect::<Vec<_>>()
            .par_iter()
            .map(|&delay| (delay.seconds(), render_stage_plots(&config.out, delay)))
            .collect();
        for (seconds, outcome) in plot_outcomes {
            match outcome {
                Ok(entries) => {
                    let stage = stages
                        .iter_mut()
                        .find(|s| s.delay == seconds)
                        .expect("plotted stage exists");
                    stage.artifacts.extend(entries);
                }
                Err(e) => {
                    log::error!("plots d{seconds}: {e}");
                    println!("plots d{seconds}: failed: {e}");
                    all_ok = false;
                }
            }
        }
    }

    let manifest = Manifest {
        config: config.clone(),
        input_digest,
        versions: Versions::current(),
        stages,
    };
    write_json(&config.out.join("manifest.json"), &manifest)?;
    all_ok &= report_stages(&manifest.stages);
    Ok(all_ok)
}

#[cfg(test)]
mod tests {
    use super::*;
    use fcurve::fd::write_trials;
    use fcurve::synthgen::{generate, ScenarioSpec, TemplateFamily, WarpFamily};
    use std::path::Path;

    fn small_config(dir: &Path) -> PipelineConfig {
        use crate::config::{resolve, Overrides};
        let flags = Overrides {
            input: Some(dir.join("trials.csv")),
            out: Some(dir.join("artifacts")),
            stages: Some("0".into()),
            permutations: Some(40),
            components: Some(3),
            d_grid: Some("0.5:0.5:1.5".into()),
            seed: Some(3),
            ..Overrides::default()
        };
        resolve(&flags, true).unwrap()
    }

    fn write_scenario(dir: &Path) {
        let spec = ScenarioSpec {
            n_l: 3,
            n_c: 3,
            trials_per_subject: 150,
            template: TemplateFamily::Sigmoid {
                rate: 8.0,
                floor: 0.3,
                ceiling: 0.8,
            },
            warps: WarpFamily::Power { min: 0.8, max: 1.3 },
            group_effect: Default::default(),
            delay: Delay::D0,
            seed: 11,
        };
        let (series, _) = generate(&spec).unwrap();
        let mut bytes = Vec::new();
        write_trials(&mut bytes, &series).unwrap();
        std::fs::write(dir.join("trials.csv"), bytes).unwrap();
    }

    #[test]
    fn full_stage_writes_every_phase_artifact() {
        let dir = tempfile::tempdir().unwrap();
        write_scenario(dir.path());
        let config = small_config(dir.path());
        std::fs::create_dir_all(&config.out).unwrap();
        let (trials, _) = load_trials(&config).unwrap();

        let entries = full_stage(&trials, &config, Delay::D0).unwrap();
        let kinds: Vec<&str> = entries.iter().map(|e| e.kind.as_str()).collect();
        assert_eq!(
            kinds.iter().filter(|k| **k == "registration").count(),
            1
        );
        assert_eq!(
            kinds.iter().filter(|k| **k == "weight_selection").count(),
            1
        );
        assert_eq!(
            kinds
                .iter()
                .filter(|k| k.starts_with("global_test:"))
                .count(),
            3
        );
        assert_eq!(
            kinds
                .iter()
                .filter(|k| k.starts_with("interval_test:"))
                .count(),
            3
        );
        for entry in &entries {
            assert!(
                config.out.join(&entry.file).is_file(),
                "{} should exist",
                entry.file
            );
        }
    }

    #[test]
    fn fpca_and_test_phases_rerun_from_tables_alone() {
        let dir = tempfile::tempdir().unwrap();
        write_scenario(dir.path());
        let config = small_config(dir.path());
        std::fs::create_dir_all(&config.out).unwrap();
        let (trials, _) = load_trials(&config).unwrap();
        register_stage(&trials, &config, Delay::D0).unwrap();
        fpca_stage(&config, Delay::D0).unwrap();
        test_stage(&config, Delay::D0).unwrap();

        let read = |name: &str| std::fs::read(config.out.join(name)).unwrap();
        let weight_once = read("weight_d0.csv");
        let tests_once = read("tests_d0.csv");
        fpca_stage(&config, Delay::D0).unwrap();
        test_stage(&config, Delay::D0).unwrap();
        assert_eq!(read("weight_d0.csv"), weight_once);
        assert_eq!(read("tests_d0.csv"), tests_once);
    }

    #[test]
    fn missing_stage_fails_without_stopping_others() {
        let dir = tempfile::tempdir().unwrap();
        write_scenario(dir.path()); // delay 0 only
        let mut config = small_config(dir.path());
        config.stages = vec![0, 4];
        std::fs::create_dir_all(&config.out).unwrap();
        let (trials, _) = load_trials(&config).unwrap();

        let stages = run_stages(&config, |delay| register_stage(&trials, &config, delay));
        assert_eq!(stages.len(), 2);
        assert!(stages[0].is_ok());
        assert!(stages[1].status.starts_with("failed:"));
        assert!(!report_stages(&stages));
    }
}
