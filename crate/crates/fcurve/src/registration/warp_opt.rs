//! Per-subject warp estimation: maximizes the Bernoulli log-likelihood of
//! the outcomes under the shared template composed with a monotone spline
//! warp, using quasi-Newton ascent in an unconstrained softmax
//! parameterization of the warp coefficients.

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;

use super::{bernoulli_loglik, gfpca::degree_for_dimension, CompensatedSum};
use crate::basis::{eval_basis, SplineBasis, SplineCurve, Warp};
use crate::diag;
use crate::error::{Error, Result};
use crate::transforms::inverse_logit_scalar;

/// Strength of the tie-break penalty pulling warp coefficients toward the
/// identity when the likelihood is flat.
const IDENTITY_RIDGE: f64 = 1e-6;
/// Smallest allowed coefficient increment, keeping warps strictly
/// monotone through floating-point underflow.
const MIN_INCREMENT: f64 = 1e-12;
const MAX_ITERS: usize = 200;
const GRAD_TOL: f64 = 1e-6;
const ARMIJO_SLOPE: f64 = 1e-4;
/// Largest coordinate move attempted per iteration. The coordinates are
/// log-increments, so an uncapped first step (gradients scale with the
/// trial count) would saturate the softmax and strand the search where
/// its gradient vanishes.
const MAX_STEP: f64 = 1.0;

/// One estimated warp together with the log-likelihood it attains.
#[derive(Debug, Clone)]
pub struct WarpFit {
    pub warp: Warp,
    pub loglik: f64,
    /// True when the optimizer produced non-finite values and the identity
    /// warp was returned instead.
    pub fell_back: bool,
}

/// The penalized warp objective: log-likelihood of outcomes at warped
/// times minus a small pull toward the identity coefficients.
pub(crate) struct WarpObjective<'a> {
    design: Array2<f64>,
    outcomes: &'a [u8],
    template: &'a SplineCurve,
    template_deriv: SplineCurve,
    identity_coefs: Vec<f64>,
    k: usize,
}

impl<'a> WarpObjective<'a> {
    pub(crate) fn new(
        basis: &SplineBasis,
        times: &[f64],
        outcomes: &'a [u8],
        template: &'a SplineCurve,
    ) -> Result<Self> {
        let design = eval_basis(basis, times)?;
        Ok(Self {
            design,
            outcomes,
            template,
            template_deriv: template.derivative(),
            identity_coefs: basis.greville_abscissae(),
            k: basis.num_basis(),
        })
    }

    /// Maps unconstrained coordinates to strictly increasing warp
    /// coefficients pinned at 0 and 1: increments are a softmax of `z`,
    /// floored away from zero, and accumulated.
    pub(crate) fn coefficients(&self, z: &[f64]) -> Vec<f64> {
        let peak = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut increments: Vec<f64> = z.iter().map(|&v| (v - peak).exp()).collect();
        let sum: f64 = increments.iter().sum();
        for d in &mut increments {
            *d = (*d / sum).max(MIN_INCREMENT);
        }
        let total: f64 = increments.iter().sum();
        let mut coefs = Vec::with_capacity(self.k);
        let mut acc = 0.0;
        coefs.push(0.0);
        for d in &increments {
            acc += d / total;
            coefs.push(acc);
        }
        coefs[self.k - 1] = 1.0;
        coefs
    }

    pub(crate) fn identity_coordinates(&self) -> Vec<f64> {
        increments_to_coordinates(&self.identity_coefs)
    }

    /// Penalized objective value at `z`.
    pub(crate) fn value(&self, z: &[f64]) -> f64 {
        let coefs = self.coefficients(z);
        self.value_at_coefficients(&coefs)
    }

    fn value_at_coefficients(&self, coefs: &[f64]) -> f64 {
        let mut loglik = CompensatedSum::new();
        for (j, &y) in self.outcomes.iter().enumerate() {
            let mut gamma = 0.0;
            for (b, &c) in coefs.iter().take(self.k).enumerate() {
                gamma += self.design[[j, b]] * c;
            }
            let theta = self.template.eval(gamma);
            loglik.add(bernoulli_loglik(theta, y));
        }
        let penalty: f64 = coefs
            .iter()
            .zip(&self.identity_coefs)
            .map(|(c, g)| (c - g) * (c - g))
            .sum();
        loglik.value() - IDENTITY_RIDGE * penalty
    }

    /// Raw (unpenalized) log-likelihood at warp coefficients.
    pub(crate) fn loglik_at_coefficients(&self, coefs: &[f64]) -> f64 {
        let mut loglik = CompensatedSum::new();
        for (j, &y) in self.outcomes.iter().enumerate() {
            let mut gamma = 0.0;
            for (b, &c) in coefs.iter().take(self.k).enumerate() {
                gamma += self.design[[j, b]] * c;
            }
            loglik.add(bernoulli_loglik(self.template.eval(gamma), y));
        }
        loglik.value()
    }

    /// Penalized objective and its gradient with respect to `z`.
    pub(crate) fn value_and_grad(&self, z: &[f64]) -> (f64, Vec<f64>) {
        let coefs = self.coefficients(z);
        let mut loglik = CompensatedSum::new();
        let mut grad_c = vec![0.0; self.k];
        for (j, &y) in self.outcomes.iter().enumerate() {
            let mut gamma = 0.0;
            for (b, &c) in coefs.iter().take(self.k).enumerate() {
                gamma += self.design[[j, b]] * c;
            }
            let theta = self.template.eval(gamma);
            loglik.add(bernoulli_loglik(theta, y));
            let residual = y as f64 - inverse_logit_scalar(theta);
            let slope = residual * self.template_deriv.eval(gamma);
            for (b, g) in grad_c.iter_mut().enumerate() {
                *g += slope * self.design[[j, b]];
            }
        }
        let mut penalty = 0.0;
        for (b, (c, g)) in coefs.iter().zip(&self.identity_coefs).enumerate() {
            penalty += (c - g) * (c - g);
            grad_c[b] -= 2.0 * IDENTITY_RIDGE * (c - g);
        }
        let value = loglik.value() - IDENTITY_RIDGE * penalty;

        // Chain rule through the softmax coordinates: with increments
        // d_p and coefficients c_m = sum of the first m increments,
        // dc_m/dz_p = d_p (1[p < m] - c_m).
        let increments: Vec<f64> = coefs.windows(2).map(|w| w[1] - w[0]).collect();
        let weighted: f64 = grad_c.iter().zip(&coefs).map(|(g, c)| g * c).sum();
        let mut suffix = vec![0.0; self.k + 1];
        for b in (0..self.k).rev() {
            suffix[b] = suffix[b + 1] + grad_c[b];
        }
        let grad_z: Vec<f64> = (0..self.k - 1)
            .map(|p| increments[p] * (suffix[p + 1] - weighted))
            .collect();
        (value, grad_z)
    }
}

/// Unconstrained coordinates whose softmax reproduces the increments of
/// the given strictly increasing coefficients.
fn increments_to_coordinates(coefs: &[f64]) -> Vec<f64> {
    coefs
        .windows(2)
        .map(|w| (w[1] - w[0]).max(MIN_INCREMENT).ln())
        .collect()
}

/// BFGS ascent on the penalized objective; returns the best coordinates
/// found, or `None` when the objective is non-finite at the start.
fn maximize(objective: &WarpObjective<'_>, start: Vec<f64>) -> Option<Vec<f64>> {
    let dim = start.len();
    let mut z = DVector::from_vec(start);
    let (value, grad) = objective.value_and_grad(z.as_slice());
    if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return None;
    }
    // Minimize the negated objective.
    let mut f = -value;
    let mut g = -DVector::from_vec(grad);
    let mut h = DMatrix::identity(dim, dim) / g.amax().max(1.0);
    for _ in 0..MAX_ITERS {
        if g.amax() < GRAD_TOL {
            break;
        }
        let mut direction = -(&h * &g);
        let mut slope = direction.dot(&g);
        if slope >= 0.0 {
            h = DMatrix::identity(dim, dim) / g.amax().max(1.0);
            direction = -(&h * &g);
            slope = direction.dot(&g);
        }
        let longest = direction.amax();
        if longest > MAX_STEP {
            direction *= MAX_STEP / longest;
            slope = direction.dot(&g);
        }
        let mut step = 1.0;
        let mut accepted = None;
        while step > 1e-12 {
            let candidate = &z + &direction * step;
            let trial = -objective.value(candidate.as_slice());
            if trial.is_finite() && trial <= f + ARMIJO_SLOPE * step * slope {
                accepted = Some((candidate, trial));
                break;
            }
            step *= 0.5;
        }
        let Some((z_new, f_new)) = accepted else {
            break;
        };
        let (value_new, grad_new) = objective.value_and_grad(z_new.as_slice());
        if !value_new.is_finite() || grad_new.iter().any(|v| !v.is_finite()) {
            break;
        }
        let g_new = -DVector::from_vec(grad_new);
        let s = &z_new - &z;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 {
            let rho = 1.0 / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            // Inverse BFGS update.
            h += (sy + yhy) * rho * rho * (&s * s.transpose())
                - rho * (&hy * s.transpose() + &s * hy.transpose());
        }
        z = z_new;
        f = f_new;
        g = g_new;
        let _ = value_new;
    }
    Some(z.as_slice().to_vec())
}

/// Estimates the warp aligning one subject's outcomes to the template.
///
/// Maximizes the Bernoulli log-likelihood of `outcomes` observed at
/// `times` under the template evaluated at warped times, over monotone
/// cubic-spline warps with `k_p` coefficients pinned at 0 and 1. A small
/// ridge toward the identity breaks likelihood ties. The returned warp is
/// the best of the optimized candidate, the previous warp (when given,
/// also used as the starting point), and the identity, so its likelihood
/// never falls below the identity warp's. Optimizer failure falls back to
/// the identity warp and is flagged and counted.
pub fn warp_step(
    times: &[f64],
    outcomes: &[u8],
    template: &SplineCurve,
    k_p: usize,
    previous: Option<&Warp>,
) -> Result<WarpFit> {
    if k_p < 2 {
        return Err(Error::InvalidConfig(format!(
            "warps need at least 2 coefficients, got {k_p}"
        )));
    }
    if times.is_empty() || times.len() != outcomes.len() {
        return Err(Error::InvalidSeries(format!(
            "{} times vs {} outcomes",
            times.len(),
            outcomes.len()
        )));
    }
    if times.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(Error::InvalidSeries("trial times leave [0, 1]".into()));
    }
    let basis = SplineBasis::with_dimension(degree_for_dimension(k_p), k_p)?;
    let objective = WarpObjective::new(&basis, times, outcomes, template)?;

    let identity_z = objective.identity_coordinates();
    let previous_z = previous.and_then(|w| {
        if w.basis().num_basis() == k_p {
            Some(increments_to_coordinates(w.coefficients()))
        } else {
            log::debug!("previous warp has mismatched dimension; ignored");
            None
        }
    });
    let start = previous_z.clone().unwrap_or_else(|| identity_z.clone());

    let optimized = maximize(&objective, start);
    let fell_back = optimized.is_none();
    if fell_back {
        diag::counters().count_warp_optimizer_fallback();
        log::warn!("warp optimizer produced non-finite values; identity used");
        let warp = Warp::identity(&basis)?;
        let loglik = objective.loglik_at_coefficients(warp.coefficients());
        return Ok(WarpFit {
            warp,
            loglik,
            fell_back,
        });
    }

    // Candidate selection on the penalized objective; the identity has
    // zero penalty, so the winner's likelihood is at least the identity's.
    let mut candidates: Vec<Vec<f64>> = vec![optimized.unwrap()];
    if let Some(z) = previous_z {
        candidates.push(z);
    }
    candidates.push(identity_z);
    let best = candidates
        .into_iter()
        .map(|z| {
            let coefs = objective.coefficients(&z);
            let value = objective.value_at_coefficients(&coefs);
            (coefs, value)
        })
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("candidate list is nonempty");
    let loglik = objective.loglik_at_coefficients(&best.0);
    let warp = Warp::new(basis, best.0)?;
    Ok(WarpFit {
        warp,
        loglik,
        fell_back,
    })
}
