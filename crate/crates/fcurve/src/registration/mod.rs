//! Joint amplitude–phase registration of repeated binary outcome series.
//!
//! Alternates between fitting subject logit curves with a generalized FPCA
//! at the current warped trial times and re-estimating each subject's warp
//! against its fitted curve, until the total Bernoulli log-likelihood
//! stabilizes. The likelihood trace is recorded once per outer iteration
//! and is kept nondecreasing: a numerically decreasing step is discarded
//! and the previous state returned.

mod gfpca;
mod warp_opt;

pub use gfpca::{gfpca_step, GfpcaFit, WarpedObservations};
pub use warp_opt::{warp_step, WarpFit};

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{SplineBasis, SplineCurve, Warp};
use crate::error::{Error, Result};
use crate::fd::{CurveKind, FunctionalSample, Grid, Group, TrialSeries};
use crate::inference::{run_test_battery, PermutationPlan, TestBattery};
use crate::transforms::{clr_forward, inverse_logit_scalar, warp_derivative};

/// Compensated (Neumaier) accumulator: keeps long log-likelihood and bound
/// sums accurate enough for the tight monotonicity slacks checked here.
#[derive(Debug, Clone, Copy)]
pub(crate) struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub(crate) fn new() -> Self {
        Self {
            sum: 0.0,
            compensation: 0.0,
        }
    }

    pub(crate) fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Numerically stable log(1 + exp(x)).
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Bernoulli log-likelihood of outcome `y` at logit `theta`.
pub(crate) fn bernoulli_loglik(theta: f64, y: u8) -> f64 {
    f64::from(y) * theta - softplus(theta)
}

/// Tuning parameters of the registration procedure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationConfig {
    /// Amplitude (template) spline dimension.
    pub k_a: usize,
    /// Phase (warp) spline dimension.
    pub k_p: usize,
    /// Requested GFPCA components; capped at what the span and sample
    /// support.
    pub n_components: usize,
    pub max_outer_iters: usize,
    /// Relative change of the total log-likelihood that stops the outer
    /// loop.
    pub outer_tol: f64,
    /// Relative change of the variational bound that stops the inner EM.
    pub inner_tol: f64,
    pub max_inner_iters: usize,
    pub seed: u64,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self {
            k_a: 4,
            k_p: 4,
            n_components: 10,
            max_outer_iters: 20,
            outer_tol: 1e-4,
            inner_tol: 1e-5,
            max_inner_iters: 200,
            seed: 0,
        }
    }
}

impl RegistrationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_a < 2 || self.k_p < 2 {
            return Err(Error::InvalidConfig(format!(
                "basis dimensions must be at least 2, got k_a={}, k_p={}",
                self.k_a, self.k_p
            )));
        }
        if self.n_components == 0 {
            return Err(Error::InvalidConfig(
                "n_components must be at least 1".into(),
            ));
        }
        if self.max_outer_iters == 0 || self.max_inner_iters == 0 {
            return Err(Error::InvalidConfig(
                "iteration caps must be at least 1".into(),
            ));
        }
        for (name, tol) in [("outer_tol", self.outer_tol), ("inner_tol", self.inner_tol)] {
            if !(tol > 0.0 && tol.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be positive and finite, got {tol}"
                )));
            }
        }
        Ok(())
    }
}

/// Output of [`register`]: latent curves in internal time, warps, and the
/// unaligned composition, all on one shared grid.
#[derive(Debug, Clone)]
pub struct RegistrationResult {
    grid: Grid,
    config: RegistrationConfig,
    subject_ids: Vec<String>,
    amplitude_basis: SplineBasis,
    /// Latent probability curves in internal time.
    aligned_prob: FunctionalSample,
    /// Latent logit curves in internal time.
    aligned_logit: FunctionalSample,
    /// Aligned logit curves composed with the warps (observed time).
    unaligned_logit: FunctionalSample,
    warps: Vec<Warp>,
    /// Spline coefficients of each subject's aligned logit curve.
    amplitude_coefficients: Array2<f64>,
    /// Subjects with all-0 or all-1 outcomes, held at the clamp bound with
    /// identity warps.
    flagged: Vec<bool>,
    /// Total Bernoulli log-likelihood after each outer iteration.
    loglik_trace: Vec<f64>,
    converged: bool,
}

impl RegistrationResult {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn config(&self) -> &RegistrationConfig {
        &self.config
    }
    pub fn subject_ids(&self) -> &[String] {
        &self.subject_ids
    }
    pub fn labels(&self) -> &[Group] {
        self.aligned_logit.labels()
    }
    pub fn aligned_prob(&self) -> &FunctionalSample {
        &self.aligned_prob
    }
    pub fn aligned_logit(&self) -> &FunctionalSample {
        &self.aligned_logit
    }
    pub fn unaligned_logit(&self) -> &FunctionalSample {
        &self.unaligned_logit
    }
    pub fn warps(&self) -> &[Warp] {
        &self.warps
    }
    pub fn amplitude_coefficients(&self) -> &Array2<f64> {
        &self.amplitude_coefficients
    }
    /// Spline basis of the aligned logit curves.
    pub fn amplitude_basis(&self) -> &SplineBasis {
        &self.amplitude_basis
    }
    /// The aligned logit curve of subject `i` as an evaluable spline.
    pub fn amplitude_curve(&self, i: usize) -> Result<SplineCurve> {
        SplineCurve::new(
            self.amplitude_basis.clone(),
            self.amplitude_coefficients.row(i).to_vec(),
        )
    }
    pub fn flagged(&self) -> &[bool] {
        &self.flagged
    }
    pub fn loglik_trace(&self) -> &[f64] {
        &self.loglik_trace
    }
    pub fn converged(&self) -> bool {
        self.converged
    }

    /// Unaligned probability curves: the aligned curves composed with the
    /// warps, mapped through the inverse logit.
    pub fn unaligned_prob(&self) -> Result<FunctionalSample> {
        let values = self.unaligned_logit.values().mapv(inverse_logit_scalar);
        FunctionalSample::new(
            self.grid.clone(),
            values,
            self.unaligned_logit.labels().to_vec(),
            CurveKind::Probability,
        )
    }

    /// CLR transforms of the warp derivatives on the result grid.
    pub fn warp_clr_sample(&self) -> Result<FunctionalSample> {
        let mut values = Array2::zeros((self.warps.len(), self.grid.len()));
        for (i, warp) in self.warps.iter().enumerate() {
            let derivative = warp_derivative(warp, &self.grid)?;
            let clr = clr_forward(&derivative, &self.grid)?;
            for (j, v) in clr.values().iter().enumerate() {
                values[[i, j]] = *v;
            }
        }
        FunctionalSample::new(
            self.grid.clone(),
            values,
            self.labels().to_vec(),
            CurveKind::WarpClr,
        )
    }

    /// Global and interval-wise group tests on the unaligned curves, the
    /// aligned curves, and the CLR-transformed warps.
    pub fn test_battery(&self, plan: &PermutationPlan, alpha: f64) -> Result<TestBattery> {
        let warp_clr = self.warp_clr_sample()?;
        run_test_battery(
            &self.unaligned_logit,
            &self.aligned_logit,
            &warp_clr,
            plan,
            alpha,
        )
    }
}

/// Total Bernoulli log-likelihood of all outcomes under each subject's
/// curve composed with its warp, accumulated in a fixed order.
fn total_loglik(data: &[TrialSeries], templates: &[SplineCurve], warps: &[Warp]) -> f64 {
    let mut total = CompensatedSum::new();
    for ((series, template), warp) in data.iter().zip(templates).zip(warps) {
        for (&s, &y) in series.times().iter().zip(series.outcomes()) {
            total.add(bernoulli_loglik(template.eval(warp.eval(s)), y));
        }
    }
    total.value()
}

/// Registers the series on a uniform grid sized to the shortest series.
pub fn register(data: &[TrialSeries], config: &RegistrationConfig) -> Result<RegistrationResult> {
    let min_len = data
        .iter()
        .map(TrialSeries::len)
        .min()
        .ok_or_else(|| Error::EmptySample("no series to register".into()))?;
    let grid = Grid::uniform(min_len)?;
    register_on_grid(data, config, &grid)
}

/// Registers the series, reporting curves on the given grid.
///
/// Alternates [`gfpca_step`] and per-subject [`warp_step`] calls from
/// identity warps until the relative change of the total log-likelihood
/// falls below `outer_tol` or the iteration cap is reached. The warp
/// updates run concurrently across subjects; the result does not depend on
/// their scheduling, and equal seed and config give bit-identical output.
pub fn register_on_grid(
    data: &[TrialSeries],
    config: &RegistrationConfig,
    grid: &Grid,
) -> Result<RegistrationResult> {
    config.validate()?;
    if data.len() < 2 {
        return Err(Error::GroupError(format!(
            "registration needs at least 2 subjects, got {}",
            data.len()
        )));
    }
    let required = config.k_a.max(config.k_p) + 4;
    for series in data {
        if series.len() < required {
            return Err(Error::InvalidSeries(format!(
                "subject {}: {} trials, need at least {required}",
                series.subject_id(),
                series.len()
            )));
        }
    }

    let n = data.len();
    let phase_basis = SplineBasis::with_dimension(
        gfpca::degree_for_dimension(config.k_p),
        config.k_p,
    )?;
    let mut warps: Vec<Warp> = (0..n)
        .map(|_| Warp::identity(&phase_basis))
        .collect::<Result<_>>()?;
    let mut fit: Option<GfpcaFit> = None;
    let mut trace: Vec<f64> = Vec::new();
    let mut converged = false;

    for _ in 0..config.max_outer_iters {
        let observations: Vec<WarpedObservations> = data
            .iter()
            .zip(&warps)
            .map(|(series, warp)| WarpedObservations {
                times: series.times().iter().map(|&s| warp.eval(s)).collect(),
                outcomes: series.outcomes().to_vec(),
            })
            .collect();
        let new_fit = gfpca_step(&observations, config, fit.as_ref())?;
        let templates: Vec<SplineCurve> = (0..n)
            .map(|i| new_fit.template(i))
            .collect::<Result<_>>()?;
        let new_warps: Vec<Warp> = (0..n)
            .into_par_iter()
            .map(|i| {
                if new_fit.flagged()[i] {
                    Warp::identity(&phase_basis)
                } else {
                    warp_step(
                        data[i].times(),
                        data[i].outcomes(),
                        &templates[i],
                        config.k_p,
                        Some(&warps[i]),
                    )
                    .map(|f| f.warp)
                }
            })
            .collect::<Result<_>>()?;
        let loglik = total_loglik(data, &templates, &new_warps);
        if let Some(&prev) = trace.last() {
            if loglik < prev - 1e-6 {
                // Numerical non-monotonicity: keep the previous state.
                log::warn!(
                    "log-likelihood decreased ({prev:.6} -> {loglik:.6}); stopping at the previous iterate"
                );
                break;
            }
        }
        let relative = trace
            .last()
            .map(|&prev| (loglik - prev).abs() / prev.abs().max(1.0));
        fit = Some(new_fit);
        warps = new_warps;
        trace.push(loglik);
        if relative.is_some_and(|r| r < config.outer_tol) {
            converged = true;
            break;
        }
    }

    let fit = fit.expect("the outer loop runs at least once");
    let converged = converged && fit.converged();

    let mut aligned = Array2::zeros((n, grid.len()));
    let mut unaligned = Array2::zeros((n, grid.len()));
    for i in 0..n {
        let template = fit.template(i)?;
        for (j, &s) in grid.points().iter().enumerate() {
            aligned[[i, j]] = template.eval(s);
            unaligned[[i, j]] = template.eval(warps[i].eval(s));
        }
    }
    let labels: Vec<Group> = data.iter().map(TrialSeries::group).collect();
    let aligned_prob = FunctionalSample::new(
        grid.clone(),
        aligned.mapv(inverse_logit_scalar),
        labels.clone(),
        CurveKind::Probability,
    )?;
    let aligned_logit = FunctionalSample::new(
        grid.clone(),
        aligned,
        labels.clone(),
        CurveKind::AlignedLogit,
    )?;
    let unaligned_logit = FunctionalSample::new(
        grid.clone(),
        unaligned,
        labels,
        CurveKind::UnalignedLogit,
    )?;

    Ok(RegistrationResult {
        grid: grid.clone(),
        config: config.clone(),
        subject_ids: data.iter().map(|s| s.subject_id().to_string()).collect(),
        amplitude_basis: fit.basis().clone(),
        aligned_prob,
        aligned_logit,
        unaligned_logit,
        warps,
        amplitude_coefficients: fit.coefficients().clone(),
        flagged: fit.flagged().to_vec(),
        loglik_trace: trace,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fd::{Delay, TrialSeries};
    use crate::synthgen::{generate, GroupEffect, ScenarioSpec, TemplateFamily, WarpFamily};
    use crate::transforms::logit_bound;

    fn simulate(
        n_per_group: usize,
        trials: usize,
        template: TemplateFamily,
        warps: WarpFamily,
        seed: u64,
    ) -> Vec<TrialSeries> {
        let spec = ScenarioSpec {
            n_l: n_per_group,
            n_c: n_per_group,
            trials_per_subject: trials,
            template,
            warps,
            group_effect: GroupEffect::default(),
            delay: Delay::D0,
            seed,
        };
        generate(&spec).unwrap().0
    }

    /// Rebuilds series `i` with new outcomes, keeping everything else.
    fn with_outcomes(data: &mut [TrialSeries], i: usize, outcomes: Vec<u8>) {
        let series = &data[i];
        let rebuilt = TrialSeries::new(
            series.subject_id().to_string(),
            series.group(),
            series.delay(),
            series.times().to_vec(),
            outcomes,
        )
        .unwrap();
        data[i] = rebuilt;
    }

    #[test]
    fn constant_cohort_recovers_level_and_mean_warp_stays_at_identity() {
        let data = simulate(
            10,
            2000,
            TemplateFamily::Constant { p: 0.7 },
            WarpFamily::Identity,
            7,
        );
        let result = register(&data, &RegistrationConfig::default()).unwrap();
        let fine = Grid::uniform(101).unwrap();
        // A constant cohort carries no phase information, so individual
        // warp estimates wander at the sampling-noise scale; what must hold
        // is that they wander independently (no systematic distortion) and
        // stay well off the boundary of the warp space.
        for warp in result.warps() {
            let deviation = warp.max_deviation_from_identity(&fine);
            assert!(deviation <= 0.45, "warp deviates by {deviation}");
        }
        let mean_warp_deviation = fine
            .points()
            .iter()
            .map(|&x| {
                let mean: f64 =
                    result.warps().iter().map(|w| w.eval(x)).sum::<f64>() / data.len() as f64;
                (mean - x).abs()
            })
            .fold(0.0, f64::max);
        assert!(
            mean_warp_deviation <= 0.05,
            "mean warp deviates by {mean_warp_deviation}"
        );
        let mean_logit: f64 = result.aligned_logit().mean_curve().iter().sum::<f64>()
            / result.grid().len() as f64;
        let expected = (0.7f64 / 0.3).ln();
        assert!(
            (mean_logit - expected).abs() < 0.1,
            "mean logit {mean_logit} vs {expected}"
        );
        assert!(result.converged());
    }

    #[test]
    fn power_warped_cohort_recovers_warp_ranks() {
        let spec = ScenarioSpec {
            n_l: 10,
            n_c: 10,
            trials_per_subject: 2000,
            template: TemplateFamily::Sigmoid {
                rate: 10.0,
                floor: 0.1,
                ceiling: 0.9,
            },
            warps: WarpFamily::Power { min: 0.6, max: 1.7 },
            group_effect: GroupEffect::default(),
            delay: Delay::D0,
            seed: 9,
        };
        let (data, truth) = generate(&spec).unwrap();
        let result = register(&data, &RegistrationConfig::default()).unwrap();
        let mid = truth.grid.len() / 2;
        let estimated: Vec<f64> = result.warps().iter().map(|w| w.eval(0.5)).collect();
        let actual: Vec<f64> = (0..data.len()).map(|i| truth.warps[[i, mid]]).collect();
        let correlation = spearman_rank_correlation(&estimated, &actual);
        assert!(
            correlation >= 0.8,
            "rank correlation {correlation} between recovered and true warps"
        );
    }

    fn spearman_rank_correlation(xs: &[f64], ys: &[f64]) -> f64 {
        let rank = |v: &[f64]| -> Vec<f64> {
            let mut order: Vec<usize> = (0..v.len()).collect();
            order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
            let mut ranks = vec![0.0; v.len()];
            for (position, &index) in order.iter().enumerate() {
                ranks[index] = position as f64;
            }
            ranks
        };
        let (rx, ry) = (rank(xs), rank(ys));
        let center = (xs.len() as f64 - 1.0) / 2.0;
        let mut cross = 0.0;
        let mut var_x = 0.0;
        let mut var_y = 0.0;
        for i in 0..xs.len() {
            cross += (rx[i] - center) * (ry[i] - center);
            var_x += (rx[i] - center).powi(2);
            var_y += (ry[i] - center).powi(2);
        }
        cross / (var_x * var_y).sqrt()
    }

    #[test]
    fn warped_cohort_reduces_aligned_variance_and_stays_consistent() {
        let data = simulate(
            5,
            800,
            TemplateFamily::Sigmoid {
                rate: 10.0,
                floor: 0.1,
                ceiling: 0.9,
            },
            WarpFamily::Power { min: 0.6, max: 1.7 },
            7,
        );
        let result = register(&data, &RegistrationConfig::default()).unwrap();

        // The reported unaligned curve is exactly the aligned spline
        // composed with the warp.
        let unaligned_prob = result.unaligned_prob().unwrap();
        for (i, warp) in result.warps().iter().enumerate() {
            let template = result.amplitude_curve(i).unwrap();
            for (j, &s) in result.grid().points().iter().enumerate() {
                let composed = inverse_logit_scalar(template.eval(warp.eval(s)));
                let direct = unaligned_prob.values()[[i, j]];
                assert!(
                    (composed - direct).abs() <= 1e-8,
                    "subject {i} at {s}: {composed} vs {direct}"
                );
            }
        }

        assert!(
            result.aligned_logit().integrated_variance()
                <= result.unaligned_logit().integrated_variance()
        );
        for w in result.loglik_trace().windows(2) {
            assert!(w[1] >= w[0] - 1e-6, "trace decreased: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn equal_seeds_give_bit_identical_results() {
        let data = simulate(
            4,
            400,
            TemplateFamily::Sigmoid {
                rate: 8.0,
                floor: 0.2,
                ceiling: 0.8,
            },
            WarpFamily::Power { min: 0.8, max: 1.3 },
            3,
        );
        let config = RegistrationConfig::default();
        let a = register(&data, &config).unwrap();
        let b = register(&data, &config).unwrap();
        assert_eq!(a.amplitude_coefficients(), b.amplitude_coefficients());
        for (wa, wb) in a.warps().iter().zip(b.warps()) {
            assert_eq!(wa.coefficients(), wb.coefficients());
        }
        assert_eq!(a.loglik_trace(), b.loglik_trace());
    }

    #[test]
    fn flipping_one_outcome_barely_moves_the_aligned_curves() {
        let base = simulate(
            3,
            2000,
            TemplateFamily::Sigmoid {
                rate: 6.0,
                floor: 0.2,
                ceiling: 0.8,
            },
            WarpFamily::Identity,
            19,
        );
        let mut perturbed = base.clone();
        let mut outcomes = perturbed[0].outcomes().to_vec();
        outcomes[1000] ^= 1;
        with_outcomes(&mut perturbed, 0, outcomes);

        let config = RegistrationConfig::default();
        let a = register(&base, &config).unwrap();
        let b = register(&perturbed, &config).unwrap();
        let mut sup = 0.0f64;
        for (x, y) in a
            .aligned_prob()
            .values()
            .iter()
            .zip(b.aligned_prob().values())
        {
            sup = sup.max((x - y).abs());
        }
        assert!(sup < 0.01, "aligned curves moved by {sup}");
    }

    #[test]
    fn degenerate_subject_is_flagged_and_clamped() {
        let mut data = simulate(
            3,
            200,
            TemplateFamily::Constant { p: 0.5 },
            WarpFamily::Identity,
            11,
        );
        let all_ones = vec![1; data[0].len()];
        with_outcomes(&mut data, 0, all_ones);
        let result = register(&data, &RegistrationConfig::default()).unwrap();
        assert!(result.flagged()[0]);
        assert!(result.flagged()[1..].iter().all(|&f| !f));
        for &v in result.aligned_logit().values().row(0) {
            assert!((v - logit_bound()).abs() < 1e-9);
        }
        let fine = Grid::uniform(51).unwrap();
        assert!(result.warps()[0].max_deviation_from_identity(&fine) <= 1e-12);
    }

    #[test]
    fn preconditions_are_enforced() {
        let data = simulate(
            1,
            100,
            TemplateFamily::Constant { p: 0.5 },
            WarpFamily::Identity,
            1,
        );
        let single = vec![data[0].clone()];
        assert!(matches!(
            register(&single, &RegistrationConfig::default()),
            Err(Error::GroupError(_))
        ));

        let short = simulate(
            2,
            6,
            TemplateFamily::Constant { p: 0.5 },
            WarpFamily::Identity,
            1,
        );
        assert!(matches!(
            register(&short, &RegistrationConfig::default()),
            Err(Error::InvalidSeries(_))
        ));

        let bad_config = RegistrationConfig {
            k_a: 1,
            ..RegistrationConfig::default()
        };
        let ok = simulate(
            2,
            100,
            TemplateFamily::Constant { p: 0.5 },
            WarpFamily::Identity,
            1,
        );
        assert!(matches!(
            register(&ok, &bad_config),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn compensated_sum_tracks_small_terms() {
        let mut sum = CompensatedSum::new();
        sum.add(1e16);
        for _ in 0..10 {
            sum.add(1.0);
        }
        sum.add(-1e16);
        assert_eq!(sum.value(), 10.0);
    }
}
