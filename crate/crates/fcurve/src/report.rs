//! Serializable report documents for registration results, bivariate
//! eigen-systems, and test batteries.
//!
//! These mirror the analysis types with plain vectors so they serialize to
//! stable, human-readable JSON: one registration document per delay stage
//! (grid, per-subject spline coefficients for the aligned curve and the
//! warp, likelihood trace, config echo), one eigen-system document per
//! stage, and one flat test-summary document per stage.

use serde::{Deserialize, Serialize};

use crate::fpca::BivariateEigenSystem;
use crate::inference::TestBattery;
use crate::registration::{RegistrationConfig, RegistrationResult};

/// Registration output for one delay stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationReport {
    pub grid: Vec<f64>,
    pub config: RegistrationConfig,
    pub subjects: Vec<SubjectReport>,
    pub loglik_trace: Vec<f64>,
    pub converged: bool,
}

/// One subject's registration output: spline coefficients of the aligned
/// logit curve and of the warp, plus bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectReport {
    pub subject_id: String,
    pub group: String,
    pub flagged: bool,
    pub aligned_coefficients: Vec<f64>,
    pub warp_coefficients: Vec<f64>,
}

impl RegistrationReport {
    pub fn from_result(result: &RegistrationResult) -> Self {
        let labels = result.aligned_logit().labels();
        let subjects = result
            .subject_ids()
            .iter()
            .enumerate()
            .map(|(i, id)| SubjectReport {
                subject_id: id.clone(),
                group: labels[i].to_string(),
                flagged: result.flagged()[i],
                aligned_coefficients: result.amplitude_coefficients().row(i).to_vec(),
                warp_coefficients: result.warps()[i].coefficients().to_vec(),
            })
            .collect();
        RegistrationReport {
            grid: result.grid().points().to_vec(),
            config: result.config().clone(),
            subjects,
            loglik_trace: result.loglik_trace().to_vec(),
            converged: result.converged(),
        }
    }
}

/// Weighted bivariate eigen-system for one delay stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenReport {
    pub d_weight: f64,
    pub grid: Vec<f64>,
    pub mean_amplitude: Vec<f64>,
    pub mean_phase: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    pub pve: Vec<f64>,
    /// One amplitude eigenfunction per component, on the grid.
    pub amplitude_eigenfunctions: Vec<Vec<f64>>,
    /// One phase eigenfunction per component, on the grid.
    pub phase_eigenfunctions: Vec<Vec<f64>>,
    /// One score row per subject.
    pub scores: Vec<Vec<f64>>,
}

impl EigenReport {
    pub fn from_system(system: &BivariateEigenSystem) -> Self {
        let rows = |a: &ndarray::Array2<f64>| -> Vec<Vec<f64>> {
            a.rows().into_iter().map(|r| r.to_vec()).collect()
        };
        EigenReport {
            d_weight: system.d_weight(),
            grid: system.grid().points().to_vec(),
            mean_amplitude: system.mean_amplitude().to_vec(),
            mean_phase: system.mean_phase().to_vec(),
            eigenvalues: system.eigenvalues().to_vec(),
            pve: system.pve().to_vec(),
            amplitude_eigenfunctions: rows(system.amplitude_eigenfunctions()),
            phase_eigenfunctions: rows(system.phase_eigenfunctions()),
            scores: rows(system.scores()),
        }
    }
}

/// Flat summary of the global tests for one delay stage; the interval-wise
/// functions and permutation draws live in their own delimited tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub alpha: f64,
    pub n_permutations: usize,
    pub curve_sets: Vec<CurveSetReport>,
}

/// Global test outcome for one curve set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSetReport {
    pub name: String,
    pub t_observed: f64,
    pub p_value: f64,
}

impl TestReport {
    pub fn from_battery(battery: &TestBattery, alpha: f64) -> Self {
        let set = |name: &str, tests: &crate::inference::CurveSetTests| CurveSetReport {
            name: name.to_string(),
            t_observed: tests.global.t_observed,
            p_value: tests.global.p_value,
        };
        TestReport {
            alpha,
            n_permutations: battery.unaligned.global.t_permuted.len(),
            curve_sets: vec![
                set("unaligned_logit", &battery.unaligned),
                set("aligned_logit", &battery.aligned),
                set("warp_clr", &battery.warps),
            ],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fd::Delay;
    use crate::registration::register;
    use crate::synthgen::{generate, GroupEffect, ScenarioSpec, TemplateFamily, WarpFamily};

    #[test]
    fn registration_report_round_trips_through_json() {
        let spec = ScenarioSpec {
            n_l: 2,
            n_c: 2,
            trials_per_subject: 120,
            template: TemplateFamily::Constant { p: 0.6 },
            warps: WarpFamily::Identity,
            group_effect: GroupEffect::default(),
            delay: Delay::D0,
            seed: 3,
        };
        let (data, _) = generate(&spec).unwrap();
        let result = register(&data, &Default::default()).unwrap();
        let report = RegistrationReport::from_result(&result);
        assert_eq!(report.subjects.len(), 4);
        assert_eq!(report.subjects[0].group, "L");
        assert_eq!(
            report.subjects[0].aligned_coefficients.len(),
            result.config().k_a
        );
        let json = serde_json::to_string_pretty(&report).unwrap();
        let back: RegistrationReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
    }
}
