//! End-to-end contract tests of the `fcurve` binary: manifest layout,
//! stage isolation, config precedence, plot invariants, and exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fcurve_cli::artifacts::Manifest;
use fcurve_cli::tables;

fn fcurve(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fcurve"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path_str(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Simulate a small cohort and return the trials file path.
fn simulate_small(dir: &Path, stages: &str, seed: &str) -> PathBuf {
    let data = dir.join("data");
    let out = fcurve(&[
        "simulate",
        "--out",
        path_str(&data),
        "--nl",
        "3",
        "--nc",
        "3",
        "--trials",
        "150",
        "--stages",
        stages,
        "--seed",
        seed,
    ]);
    assert!(out.status.success(), "simulate: {out:?}");
    data.join("trials.csv")
}

fn read_manifest(out_dir: &Path) -> Manifest {
    let bytes = std::fs::read(out_dir.join("manifest.json")).expect("manifest exists");
    serde_json::from_slice(&bytes).expect("manifest parses")
}

fn kind_count(manifest: &Manifest, delay: u8, kind: &str) -> usize {
    manifest
        .stages
        .iter()
        .find(|s| s.delay == delay)
        .expect("stage present")
        .artifacts
        .iter()
        .filter(|a| a.kind == kind)
        .count()
}

#[test]
fn pipeline_writes_contracted_artifacts_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let input = simulate_small(dir.path(), "0,2", "4");
    let out_dir = dir.path().join("run");
    let out = fcurve(&[
        "pipeline",
        "--input",
        path_str(&input),
        "--out",
        path_str(&out_dir),
        "--stages",
        "0,2",
        "--seed",
        "4",
        "--permutations",
        "60",
        "--components",
        "3",
        "--d-grid",
        "1.0:1.0:2.0",
    ]);
    assert!(out.status.success(), "pipeline: {out:?}");

    let manifest = read_manifest(&out_dir);
    assert_eq!(manifest.config.seed, 4);
    assert_eq!(manifest.config.stages, vec![0, 2]);
    assert_eq!(manifest.config.permutations, 60);
    assert!(manifest.input_digest.starts_with("sha256:"));
    assert!(!manifest.versions.fcurve.is_empty());
    assert_eq!(manifest.stages.len(), 2);

    for stage in &manifest.stages {
        assert!(stage.is_ok(), "stage {}: {}", stage.delay, stage.status);
        // One registration result, one weight selection, and one test per
        // family and curve set, plus the curve/eigen/mode/permutation
        // tables and the four plots.
        assert_eq!(kind_count(&manifest, stage.delay, "registration"), 1);
        assert_eq!(kind_count(&manifest, stage.delay, "weight_selection"), 1);
        for set in ["unaligned_logit", "aligned_logit", "warp_clr"] {
            assert_eq!(
                kind_count(&manifest, stage.delay, &format!("global_test:{set}")),
                1
            );
            assert_eq!(
                kind_count(&manifest, stage.delay, &format!("interval_test:{set}")),
                1
            );
        }
        for kind in [
            "curves",
            "eigen_system",
            "modes",
            "permutations",
            "sample_plot",
            "modes_plot",
            "pvalue_plot",
            "histogram_plot",
        ] {
            assert_eq!(kind_count(&manifest, stage.delay, kind), 1, "kind {kind}");
        }
        // Every listed artifact exists on disk.
        for artifact in &stage.artifacts {
            assert!(
                out_dir.join(&artifact.file).is_file(),
                "missing {}",
                artifact.file
            );
        }
    }
}

#[test]
fn one_subject_stage_fails_alone_and_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let input = simulate_small(dir.path(), "0,2", "5");

    // Strip delay-2 rows down to a single subject.
    let text = std::fs::read_to_string(&input).unwrap();
    let mut lone_subject: Option<String> = None;
    let filtered: Vec<&str> = text
        .lines()
        .filter(|line| {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.first() == Some(&"subject_id") || fields[2] != "2" {
                return true;
            }
            let subject = fields[0].to_string();
            match &lone_subject {
                None => {
                    lone_subject = Some(subject);
                    true
                }
                Some(kept) => *kept == subject,
            }
        })
        .collect();
    let pruned = dir.path().join("pruned.csv");
    std::fs::write(&pruned, filtered.join("\n") + "\n").unwrap();

    let out_dir = dir.path().join("run");
    let out = fcurve(&[
        "pipeline",
        "--input",
        path_str(&pruned),
        "--out",
        path_str(&out_dir),
        "--stages",
        "0,2",
        "--permutations",
        "40",
        "--components",
        "2",
        "--d-grid",
        "1.0:1.0:1.0",
        "--no-plots",
    ]);
    assert_eq!(out.status.code(), Some(1), "expected run failure: {out:?}");

    let manifest = read_manifest(&out_dir);
    let failed = manifest.stages.iter().find(|s| s.delay == 2).unwrap();
    assert!(failed.status.contains("group error"), "{}", failed.status);
    assert!(failed.artifacts.is_empty());
    let ok = manifest.stages.iter().find(|s| s.delay == 0).unwrap();
    assert!(ok.is_ok());
    assert!(!ok.artifacts.is_empty());
}

#[test]
fn flags_override_settings_file() {
    let dir = tempfile::tempdir().unwrap();
    let input = simulate_small(dir.path(), "0", "6");
    let out_dir = dir.path().join("run");
    let settings = dir.path().join("run.conf");
    std::fs::write(
        &settings,
        format!(
            "# small smoke run\n\
             input = {}\n\
             out = {}\n\
             stages = 0\n\
             seed = 9\n\
             permutations = 77\n\
             ka = 5\n\
             kp = 5\n\
             components = 3\n\
             d_grid = 1.0:1.0:2.0\n\
             plots = false\n",
            input.display(),
            out_dir.display()
        ),
    )
    .unwrap();

    let out = fcurve(&["pipeline", "--config", path_str(&settings), "--seed", "4"]);
    assert!(out.status.success(), "pipeline: {out:?}");

    let manifest = read_manifest(&out_dir);
    assert_eq!(manifest.config.seed, 4, "flag beats file");
    assert_eq!(manifest.config.permutations, 77, "file value survives");
    assert_eq!(manifest.config.registration.k_a, 5);
    assert_eq!(manifest.config.registration.seed, 4);
    assert!(!manifest.config.plots);
    assert!(!out_dir.join("sample_d0.svg").exists());
}

#[test]
fn plots_expose_every_number_from_the_tables() {
    let dir = tempfile::tempdir().unwrap();
    let input = simulate_small(dir.path(), "0", "7");
    let out_dir = dir.path().join("run");
    let out = fcurve(&[
        "pipeline",
        "--input",
        path_str(&input),
        "--out",
        path_str(&out_dir),
        "--stages",
        "0",
        "--permutations",
        "60",
        "--components",
        "2",
        "--d-grid",
        "1.0:1.0:1.0",
    ]);
    assert!(out.status.success(), "pipeline: {out:?}");

    // The p-value plot carries exactly six countable series: adjusted and
    // unadjusted curves for each of the three tested sets.
    let pvalues_svg = std::fs::read_to_string(out_dir.join("pvalues_d0.svg")).unwrap();
    assert_eq!(pvalues_svg.matches("class=\"series\"").count(), 6);

    // Histogram annotations repeat the observed statistics verbatim from
    // the global test table.
    let tests = tables::read_tests(&out_dir.join("tests_d0.csv")).unwrap();
    let histogram_svg = std::fs::read_to_string(out_dir.join("histograms_d0.svg")).unwrap();
    assert_eq!(tests.len(), 3);
    for (set, t_observed, p_value) in &tests {
        assert!(
            histogram_svg.contains(&format!("T = {t_observed}")),
            "missing observed statistic for {set}"
        );
        assert!(
            histogram_svg.contains(&format!("(p = {p_value})")),
            "missing p annotation for {set}"
        );
    }
}

#[test]
fn plot_subcommand_names_the_missing_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let out = fcurve(&[
        "plot",
        "--out",
        path_str(dir.path()),
        "--stages",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("curves_d0.csv"),
        "stderr names the missing file: {stderr}"
    );
}

#[test]
fn configuration_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let input = simulate_small(dir.path(), "0", "8");

    // Unknown delay stage.
    let out = fcurve(&[
        "pipeline",
        "--input",
        path_str(&input),
        "--out",
        path_str(&dir.path().join("x")),
        "--stages",
        "0,3",
    ]);
    assert_eq!(out.status.code(), Some(2), "{out:?}");
    assert!(String::from_utf8_lossy(&out.stderr).contains("configuration error"));

    // Missing input.
    let out = fcurve(&["pipeline", "--out", path_str(&dir.path().join("x"))]);
    assert_eq!(out.status.code(), Some(2));

    // Unknown settings-file key, reported with file and line.
    let settings = dir.path().join("bad.conf");
    std::fs::write(&settings, "speed = 9\n").unwrap();
    let out = fcurve(&["pipeline", "--config", path_str(&settings)]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("speed") && stderr.contains("line 1"), "{stderr}");
}

#[test]
fn standalone_subcommands_reproduce_pipeline_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let input = simulate_small(dir.path(), "0", "11");
    let pipeline_out = dir.path().join("pipeline");
    let chain_out = dir.path().join("chain");

    let out = fcurve(&[
        "pipeline",
        "--input",
        path_str(&input),
        "--out",
        path_str(&pipeline_out),
        "--stages",
        "0",
        "--seed",
        "5",
        "--permutations",
        "60",
        "--components",
        "2",
        "--d-grid",
        "1.0:1.0:2.0",
    ]);
    assert!(out.status.success(), "pipeline: {out:?}");

    let chain = path_str(&chain_out).to_string();
    let steps: Vec<Vec<&str>> = vec![
        vec![
            "register", "--input", path_str(&input), "--out", &chain, "--stages", "0", "--seed",
            "5",
        ],
        vec![
            "fpca", "--out", &chain, "--stages", "0", "--components", "2", "--d-grid",
            "1.0:1.0:2.0",
        ],
        vec![
            "test", "--out", &chain, "--stages", "0", "--seed", "5", "--permutations", "60",
        ],
        vec!["plot", "--out", &chain, "--stages", "0"],
    ];
    for step in &steps {
        let out = fcurve(step);
        assert!(out.status.success(), "{}: {out:?}", step[0]);
    }

    // Every pipeline artifact except the manifest is reproduced verbatim
    // by the standalone chain: the later phases consume only the tables.
    let mut compared = 0usize;
    for entry in std::fs::read_dir(&pipeline_out).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_str().unwrap().to_string();
        if name == "manifest.json" {
            continue;
        }
        let twin = chain_out.join(&name);
        assert!(twin.is_file(), "chain is missing {name}");
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&twin).unwrap(),
            "artifact {name} differs between pipeline and chain"
        );
        compared += 1;
    }
    assert!(compared >= 10, "only {compared} artifacts compared");
}

#[test]
fn simulate_writes_trials_and_truth_tables() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let out = fcurve(&[
        "simulate",
        "--out",
        path_str(&data),
        "--nl",
        "2",
        "--nc",
        "2",
        "--trials",
        "120",
        "--stages",
        "0",
        "--seed",
        "3",
    ]);
    assert!(out.status.success(), "simulate: {out:?}");

    let trials = std::fs::read_to_string(data.join("trials.csv")).unwrap();
    assert!(trials.starts_with("subject_id,group,delay,trial_index,outcome"));

    let truth = std::fs::read_to_string(data.join("truth.csv")).unwrap();
    assert!(truth.starts_with("delay,set,subject_id,group,s,value"));
    assert!(truth.contains(",probability,"));
    assert!(truth.contains(",warp,"));

    // The standalone register subcommand runs on the simulated file.
    let out_dir = dir.path().join("reg");
    let out = fcurve(&[
        "register",
        "--input",
        path_str(&data.join("trials.csv")),
        "--out",
        path_str(&out_dir),
        "--stages",
        "0",
    ]);
    assert!(out.status.success(), "register: {out:?}");
    assert!(out_dir.join("registration_d0.json").is_file());
    assert!(out_dir.join("curves_d0.csv").is_file());
}
