//! Generalized functional PCA for binary outcomes: a variational EM on the
//! quadratic tangent bound of the Bernoulli log-likelihood, with subject
//! curves constrained to a shared low-dimensional spline span.
//!
//! Each subject's latent logit curve is the shared mean plus a Gaussian
//! deviation whose prior smooths shape (slope and curvature) hard while
//! leaving level offsets nearly free. Shape differences between subjects are
//! therefore carried by the warping functions rather than by the curves,
//! which is what gives the outer registration loop its alignment pressure;
//! level differences (overall performance) pass straight through.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use ndarray::Array2;

use super::{softplus, CompensatedSum, RegistrationConfig};
use crate::basis::{eval_basis, fit_least_squares, SplineBasis, SplineCurve};
use crate::diag;
use crate::error::{Error, Result};
use crate::transforms::{logit, logit_bound};

/// Weight of the second-difference (curvature) penalty applied to the shared
/// mean and to per-subject deviations.
const ROUGHNESS_WEIGHT: f64 = 10.0;

/// Weight of the first-difference (slope) penalty applied to per-subject
/// deviations only. Large relative to the data precision, so between-subject
/// shape differences are absorbed by the warps instead of the curves.
const SLOPE_WEIGHT: f64 = 400.0;

/// Prior standard deviation of per-subject level offsets on the logit scale;
/// wide enough to be effectively uninformative.
const LEVEL_SD: f64 = 5.0;

/// Binary outcomes placed at (possibly warped) trial times in [0, 1].
#[derive(Debug, Clone)]
pub struct WarpedObservations {
    pub times: Vec<f64>,
    pub outcomes: Vec<u8>,
}

/// Fitted generalized FPCA: subject curves `b0 + xi_i` in coefficient
/// space, posterior deviation means, and the variational bound trace.
#[derive(Debug, Clone)]
pub struct GfpcaFit {
    pub(crate) basis: SplineBasis,
    pub(crate) intercept: DVector<f64>,
    /// Component loadings, one column per effective component.
    pub(crate) loadings: DMatrix<f64>,
    /// Standardized component scores, one row per subject (zeros when
    /// flagged).
    pub(crate) scores: DMatrix<f64>,
    /// Subject curve coefficients, one row per subject; flagged subjects
    /// hold the constant clamp-bound curve.
    pub(crate) coefficients: Array2<f64>,
    /// Subjects with all-0 or all-1 outcomes, excluded from the EM.
    pub(crate) flagged: Vec<bool>,
    pub(crate) bound_trace: Vec<f64>,
    pub(crate) converged: bool,
}

impl GfpcaFit {
    pub fn basis(&self) -> &SplineBasis {
        &self.basis
    }
    pub fn intercept(&self) -> &DVector<f64> {
        &self.intercept
    }
    pub fn loadings(&self) -> &DMatrix<f64> {
        &self.loadings
    }
    pub fn scores(&self) -> &DMatrix<f64> {
        &self.scores
    }
    pub fn coefficients(&self) -> &Array2<f64> {
        &self.coefficients
    }
    pub fn flagged(&self) -> &[bool] {
        &self.flagged
    }
    pub fn bound_trace(&self) -> &[f64] {
        &self.bound_trace
    }
    pub fn converged(&self) -> bool {
        self.converged
    }

    /// The fitted logit curve of subject `i` as an evaluable spline.
    pub fn template(&self, i: usize) -> Result<SplineCurve> {
        let row: Vec<f64> = self.coefficients.row(i).to_vec();
        SplineCurve::new(self.basis.clone(), row)
    }
}

/// Quadratic-bound curvature coefficient; series expansion near zero.
fn tangent_lambda(omega: f64) -> f64 {
    let w = omega.abs();
    if w < 1e-4 {
        0.125 - w * w / 96.0
    } else {
        (w / 2.0).tanh() / (4.0 * w)
    }
}

/// The spline degree used for a basis of the given dimension: cubic when
/// the dimension allows, lower otherwise.
pub(crate) fn degree_for_dimension(k: usize) -> usize {
    (k - 1).min(3)
}

/// `D' D` for the order-`order` difference operator on `k` coefficients;
/// zero when the difference does not fit.
fn difference_penalty(k: usize, order: usize) -> DMatrix<f64> {
    let mut p = DMatrix::zeros(k, k);
    if k <= order {
        return p;
    }
    let signs: Vec<f64> = match order {
        1 => vec![-1.0, 1.0],
        2 => vec![1.0, -2.0, 1.0],
        _ => unreachable!("only first and second differences are used"),
    };
    for r in 0..k - order {
        for (a, &sa) in signs.iter().enumerate() {
            for (b, &sb) in signs.iter().enumerate() {
                p[(r + a, r + b)] += sa * sb;
            }
        }
    }
    p
}

struct SubjectWork {
    /// Dense design matrix, one row of basis values per trial.
    design: Array2<f64>,
    /// y - 1/2 per trial.
    shifted: Vec<f64>,
    /// Sum of (y - 1/2) * basis row; the linear term of the M-step.
    g: DVector<f64>,
}

fn running_mean(outcomes: &[u8], window: usize) -> Vec<f64> {
    let t = outcomes.len();
    let half = window / 2;
    (0..t)
        .map(|j| {
            let lo = j.saturating_sub(half);
            let hi = (j + half + 1).min(t);
            let sum: u32 = outcomes[lo..hi].iter().map(|&y| y as u32).sum();
            sum as f64 / (hi - lo) as f64
        })
        .collect()
}

/// Fits the shared template structure to binary outcomes at their current
/// warped times.
///
/// Runs an EM whose E-step updates the Gaussian posterior of each subject's
/// deviation from the shared mean, whose M-step refits the mean, and whose
/// variational parameters tighten the quadratic bound each cycle, so the
/// reported bound trace is nondecreasing up to solver precision. Subjects
/// with all-0 or all-1 outcomes are flagged, excluded from the EM, and given
/// the constant curve at the corresponding logit clamp bound. A warm start
/// reuses the previous mean and deviation means.
pub fn gfpca_step(
    observations: &[WarpedObservations],
    config: &RegistrationConfig,
    warm: Option<&GfpcaFit>,
) -> Result<GfpcaFit> {
    config.validate()?;
    let n = observations.len();
    if n == 0 {
        return Err(Error::EmptySample("no subjects to fit".into()));
    }
    for (i, obs) in observations.iter().enumerate() {
        if obs.times.is_empty() || obs.times.len() != obs.outcomes.len() {
            return Err(Error::InvalidSeries(format!(
                "subject {i}: {} times vs {} outcomes",
                obs.times.len(),
                obs.outcomes.len()
            )));
        }
        if obs.times.iter().any(|t| !(-1e-12..=1.0 + 1e-12).contains(t)) {
            return Err(Error::InvalidSeries(format!(
                "subject {i}: warped times leave [0, 1]"
            )));
        }
        if obs.outcomes.iter().any(|&y| y > 1) {
            return Err(Error::InvalidSeries(format!(
                "subject {i}: outcomes must be 0 or 1"
            )));
        }
    }

    let k = config.k_a;
    let basis = SplineBasis::with_dimension(degree_for_dimension(k), k)?;
    let flagged: Vec<bool> = observations
        .iter()
        .map(|obs| obs.outcomes.iter().all(|&y| y == 0) || obs.outcomes.iter().all(|&y| y == 1))
        .collect();
    let active: Vec<usize> = (0..n).filter(|&i| !flagged[i]).collect();

    // Effective component count is bounded by the span dimension.
    let m = config.n_components.min(k);
    if m < config.n_components {
        diag::counters().count_component_cap();
        log::debug!(
            "effective components capped at {m} (requested {})",
            config.n_components
        );
    }

    let mut coefficients = Array2::zeros((n, k));
    for (i, &is_flagged) in flagged.iter().enumerate() {
        if is_flagged {
            let level = if observations[i].outcomes[0] == 1 {
                logit_bound()
            } else {
                -logit_bound()
            };
            for j in 0..k {
                coefficients[[i, j]] = level;
            }
        }
    }

    // Fixed deviation prior: precision = slope and curvature penalties plus
    // a weak level term that keeps it positive definite.
    let mean_penalty = difference_penalty(k, 2) * ROUGHNESS_WEIGHT;
    let prior_precision = &mean_penalty
        + difference_penalty(k, 1) * SLOPE_WEIGHT
        + DMatrix::identity(k, k) / (LEVEL_SD * LEVEL_SD);
    let prior_chol = Cholesky::new(prior_precision.clone())
        .ok_or_else(|| Error::InvalidConfig("deviation prior not positive definite".into()))?;
    let prior_cov = prior_chol.inverse();
    let log_det_prior_precision: f64 = (0..k).map(|r| 2.0 * prior_chol.l_dirty()[(r, r)].ln()).sum();

    if active.is_empty() {
        let (loadings, _) = component_frame(&prior_cov, m);
        return Ok(GfpcaFit {
            basis,
            intercept: DVector::zeros(k),
            loadings,
            scores: DMatrix::zeros(n, m),
            coefficients,
            flagged,
            bound_trace: Vec::new(),
            converged: true,
        });
    }

    let work: Vec<SubjectWork> = active
        .iter()
        .map(|&i| {
            let obs = &observations[i];
            let clamped: Vec<f64> = obs.times.iter().map(|t| t.clamp(0.0, 1.0)).collect();
            let design = eval_basis(&basis, &clamped)?;
            let shifted: Vec<f64> = obs.outcomes.iter().map(|&y| y as f64 - 0.5).collect();
            let mut g = DVector::zeros(k);
            for (j, &s) in shifted.iter().enumerate() {
                for b in 0..k {
                    g[b] += s * design[[j, b]];
                }
            }
            Ok(SubjectWork {
                design,
                shifted,
                g,
            })
        })
        .collect::<Result<_>>()?;

    // Initialize the mean and deviations, either from the warm fit or from a
    // least-squares fit of the logit of a smoothed running mean.
    let warm_usable =
        warm.is_some_and(|f| f.basis == basis && f.coefficients.nrows() == n && !f.intercept.is_empty());
    let (mut b0, mut means): (DVector<f64>, Vec<DVector<f64>>) = if warm_usable {
        let f = warm.unwrap();
        let means = active
            .iter()
            .map(|&i| DVector::from_fn(k, |b, _| f.coefficients[[i, b]] - f.intercept[b]))
            .collect();
        (f.intercept.clone(), means)
    } else {
        let mut rows = DMatrix::zeros(active.len(), k);
        for (a, &i) in active.iter().enumerate() {
            let obs = &observations[i];
            let t = obs.outcomes.len();
            let window = (t / 20).max(3);
            let smoothed = running_mean(&obs.outcomes, window);
            let z = logit(&smoothed);
            let clamped: Vec<f64> = obs.times.iter().map(|x| x.clamp(0.0, 1.0)).collect();
            let coefs = fit_least_squares(&basis, &clamped, &z, 1e-8)?;
            for (b, c) in coefs.iter().enumerate() {
                rows[(a, b)] = *c;
            }
        }
        let b0 = DVector::from_fn(k, |b, _| rows.column(b).mean());
        let means = (0..active.len())
            .map(|a| DVector::from_fn(k, |b, _| rows[(a, b)] - b0[b]))
            .collect();
        (b0, means)
    };

    let mut covariances = vec![prior_cov.clone(); active.len()];
    let mut log_dets = vec![-log_det_prior_precision; active.len()];
    let mut lambdas: Vec<Vec<f64>> = work.iter().map(|w| vec![0.125; w.shifted.len()]).collect();
    let mut omegas: Vec<Vec<f64>> = work.iter().map(|w| vec![0.0; w.shifted.len()]).collect();

    let mut bound_trace: Vec<f64> = Vec::new();
    let mut converged = false;

    for _cycle in 0..config.max_inner_iters {
        // Variational update and E-step under the current mean: tighten
        // omega at the posterior moments, then refresh the deviation
        // posteriors.
        for (a, w) in work.iter().enumerate() {
            let t = w.shifted.len();
            let mut precision = prior_precision.clone();
            let mut rhs = DVector::zeros(k);
            let lam = &mut lambdas[a];
            let om = &mut omegas[a];
            let mean = &means[a];
            let cov = &covariances[a];
            let mut row = DVector::zeros(k);
            for j in 0..t {
                for b in 0..k {
                    row[b] = w.design[[j, b]];
                }
                let a_val = row.dot(&b0);
                let e_theta = a_val + row.dot(mean);
                let variance = (cov * &row).dot(&row);
                let omega = (e_theta * e_theta + variance).max(0.0).sqrt();
                let lambda = tangent_lambda(omega);
                om[j] = omega;
                lam[j] = lambda;
                let scale = 2.0 * lambda;
                for r in 0..k {
                    for s in 0..k {
                        precision[(r, s)] += scale * row[r] * row[s];
                    }
                    rhs[r] += (w.shifted[j] - scale * a_val) * row[r];
                }
            }
            let chol = precision.cholesky().ok_or_else(|| {
                Error::InvalidConfig("deviation precision not positive definite".into())
            })?;
            means[a].copy_from(&chol.solve(&rhs));
            let mut log_det_precision = 0.0;
            for r in 0..k {
                log_det_precision += chol.l_dirty()[(r, r)].ln();
            }
            log_dets[a] = -2.0 * log_det_precision;
            covariances[a] = chol.inverse();
        }

        // M-step: penalized solve for the shared mean.
        let mut system = mean_penalty.clone() * 2.0;
        let mut rhs = DVector::zeros(k);
        for (a, w) in work.iter().enumerate() {
            let t = w.shifted.len();
            let mut w_mat: DMatrix<f64> = DMatrix::zeros(k, k);
            for (j, &lambda) in lambdas[a].iter().take(t).enumerate() {
                for b in 0..k {
                    let vb = lambda * w.design[[j, b]];
                    for b2 in 0..k {
                        w_mat[(b, b2)] += vb * w.design[[j, b2]];
                    }
                }
            }
            rhs += &w.g - (&w_mat * &means[a]) * 2.0;
            system += w_mat * 2.0;
        }
        let solution = match system.clone().cholesky() {
            Some(chol) => chol.solve(&rhs),
            None => {
                diag::counters().count_em_ridge_event();
                log::debug!("mean system singular; ridge added");
                for idx in 0..k {
                    system[(idx, idx)] += 1e-8;
                }
                match system.clone().cholesky() {
                    Some(chol) => chol.solve(&rhs),
                    None => system
                        .svd(true, true)
                        .solve(&rhs, 1e-12)
                        .map_err(|e| Error::InvalidConfig(format!("mean solve failed: {e}")))?,
                }
            }
        };
        b0.copy_from(&solution);

        // Variational bound at the updated parameters.
        let mut total = CompensatedSum::new();
        for (a, w) in work.iter().enumerate() {
            let t = w.shifted.len();
            let mean = &means[a];
            let cov = &covariances[a];
            let mut row = DVector::zeros(k);
            for j in 0..t {
                for b in 0..k {
                    row[b] = w.design[[j, b]];
                }
                let e_theta = row.dot(&b0) + row.dot(mean);
                let e_theta_sq = e_theta * e_theta + (cov * &row).dot(&row);
                let omega = omegas[a][j];
                let lambda = lambdas[a][j];
                total.add(-softplus(-omega));
                total.add(w.shifted[j] * e_theta);
                total.add(-omega / 2.0);
                total.add(-lambda * (e_theta_sq - omega * omega));
            }
            let quad = (&prior_precision * cov).trace() + (&prior_precision * mean).dot(mean);
            let kl = 0.5 * (quad - k as f64 - log_det_prior_precision - log_dets[a]);
            total.add(-kl);
        }
        total.add(-(&mean_penalty * &b0).dot(&b0));
        let bound = total.value();
        if let Some(&last) = bound_trace.last() {
            if bound < last - 1e-8 {
                log::warn!("variational bound decreased by {:.3e}", last - bound);
            }
            if (bound - last).abs() / last.abs().max(1.0) < config.inner_tol {
                bound_trace.push(bound);
                converged = true;
                break;
            }
        }
        bound_trace.push(bound);
    }

    let (loadings, inverse_scales) = component_frame(&prior_cov, m);
    let mut scores = DMatrix::zeros(n, m);
    for (a, &i) in active.iter().enumerate() {
        for b in 0..k {
            coefficients[[i, b]] = b0[b] + means[a][b];
        }
        for r in 0..m {
            let mut proj = 0.0;
            for b in 0..k {
                proj += loadings[(b, r)] * means[a][b];
            }
            scores[(i, r)] = proj * inverse_scales[r] * inverse_scales[r];
        }
    }

    Ok(GfpcaFit {
        basis,
        intercept: b0,
        loadings,
        scores,
        coefficients,
        flagged,
        bound_trace,
        converged,
    })
}

/// Leading eigenpairs of the deviation prior covariance: loadings scaled by
/// the component standard deviation, plus the inverse scales used to
/// standardize scores.
fn component_frame(prior_cov: &DMatrix<f64>, m: usize) -> (DMatrix<f64>, Vec<f64>) {
    let k = prior_cov.nrows();
    let eig = SymmetricEigen::new(prior_cov.clone());
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut loadings = DMatrix::zeros(k, m);
    let mut inverse_scales = vec![0.0; m];
    for (r, &idx) in order.iter().take(m).enumerate() {
        let scale = eig.eigenvalues[idx].max(0.0).sqrt();
        for b in 0..k {
            loadings[(b, r)] = eig.eigenvectors[(b, idx)] * scale;
        }
        inverse_scales[r] = if scale > 0.0 { 1.0 / scale } else { 0.0 };
    }
    (loadings, inverse_scales)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fd::Grid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn config() -> RegistrationConfig {
        RegistrationConfig::default()
    }

    /// Outcome sequence with exactly round(t * p) ones, spread evenly.
    fn exact_frequency_outcomes(t: usize, p: f64) -> Vec<u8> {
        (0..t)
            .map(|j| {
                let before = ((j as f64) * p).floor() as i64;
                let after = ((j as f64 + 1.0) * p).floor() as i64;
                u8::from(after > before)
            })
            .collect()
    }

    fn uniform_times(t: usize) -> Vec<f64> {
        Grid::uniform(t).unwrap().points().to_vec()
    }

    #[test]
    fn all_ones_subject_is_clamped_at_the_positive_bound() {
        let t = 400;
        let observations = vec![
            WarpedObservations {
                times: uniform_times(t),
                outcomes: vec![1; t],
            },
            WarpedObservations {
                times: uniform_times(t),
                outcomes: exact_frequency_outcomes(t, 0.5),
            },
        ];
        let fit = gfpca_step(&observations, &config(), None).unwrap();
        assert_eq!(fit.flagged(), &[true, false]);
        let template = fit.template(0).unwrap();
        for &s in Grid::uniform(41).unwrap().points() {
            assert!((template.eval(s) - logit_bound()).abs() < 1e-9);
        }
        // Scores of the flagged subject stay zero.
        for r in 0..fit.scores().ncols() {
            assert_eq!(fit.scores()[(0, r)], 0.0);
        }
    }

    #[test]
    fn constant_frequencies_are_recovered_on_the_logit_scale() {
        let t = 1000;
        let observations = vec![
            WarpedObservations {
                times: uniform_times(t),
                outcomes: exact_frequency_outcomes(t, 0.3),
            },
            WarpedObservations {
                times: uniform_times(t),
                outcomes: exact_frequency_outcomes(t, 0.7),
            },
        ];
        let fit = gfpca_step(&observations, &config(), None).unwrap();
        let expected = [(0.3f64 / 0.7).ln(), (0.7f64 / 0.3).ln()];
        for (i, want) in expected.iter().enumerate() {
            let template = fit.template(i).unwrap();
            for &s in Grid::uniform(21).unwrap().points() {
                let got = template.eval(s);
                assert!(
                    (got - want).abs() < 0.05,
                    "subject {i} at {s}: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn bound_trace_is_nondecreasing() {
        let t = 300;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let times = uniform_times(t);
        let observations: Vec<WarpedObservations> = (0..5)
            .map(|i| {
                let p0 = 0.3 + 0.1 * i as f64;
                WarpedObservations {
                    times: times.clone(),
                    outcomes: (0..t)
                        .map(|j| {
                            let p = p0 + 0.3 * (j as f64 / t as f64);
                            u8::from(rng.gen::<f64>() < p)
                        })
                        .collect(),
                }
            })
            .collect();
        let fit = gfpca_step(&observations, &config(), None).unwrap();
        assert!(fit.bound_trace().len() >= 2);
        for w in fit.bound_trace().windows(2) {
            assert!(
                w[1] >= w[0] - 1e-8,
                "bound decreased: {} -> {}",
                w[0],
                w[1]
            );
        }
        assert!(fit.converged());
    }

    #[test]
    fn component_request_is_capped_by_span_dimension() {
        let before = diag::counters().snapshot();
        let t = 200;
        let observations: Vec<WarpedObservations> = (0..3)
            .map(|i| WarpedObservations {
                times: uniform_times(t),
                outcomes: exact_frequency_outcomes(t, 0.3 + 0.2 * i as f64),
            })
            .collect();
        // Default config asks for 10 components in a 4-dimensional span:
        // cap at 4.
        let fit = gfpca_step(&observations, &config(), None).unwrap();
        assert_eq!(fit.loadings().ncols(), 4);
        let after = diag::counters().snapshot();
        assert!(after.component_caps > before.component_caps);
    }

    #[test]
    fn warm_start_reuses_previous_structure() {
        let t = 300;
        let observations: Vec<WarpedObservations> = (0..4)
            .map(|i| WarpedObservations {
                times: uniform_times(t),
                outcomes: exact_frequency_outcomes(t, 0.25 + 0.15 * i as f64),
            })
            .collect();
        let first = gfpca_step(&observations, &config(), None).unwrap();
        let second = gfpca_step(&observations, &config(), Some(&first)).unwrap();
        // The warm start begins at the converged fit, so it should settle
        // at least as fast and stay near the same curves.
        assert!(second.bound_trace().len() <= first.bound_trace().len());
        for i in 0..4 {
            let a = first.template(i).unwrap();
            let b = second.template(i).unwrap();
            for &s in Grid::uniform(11).unwrap().points() {
                assert!((a.eval(s) - b.eval(s)).abs() < 0.05);
            }
        }
    }

    #[test]
    fn invalid_observations_are_rejected() {
        assert!(matches!(
            gfpca_step(&[], &config(), None),
            Err(Error::EmptySample(_))
        ));
        let bad_times = WarpedObservations {
            times: vec![0.0, 0.5, 1.5],
            outcomes: vec![0, 1, 0],
        };
        assert!(matches!(
            gfpca_step(&[bad_times], &config(), None),
            Err(Error::InvalidSeries(_))
        ));
        let mismatch = WarpedObservations {
            times: vec![0.0, 1.0],
            outcomes: vec![0],
        };
        assert!(matches!(
            gfpca_step(&[mismatch], &config(), None),
            Err(Error::InvalidSeries(_))
        ));
    }
}
