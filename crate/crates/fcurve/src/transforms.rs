//! Scale transforms: the clamped logit pair and the centered log-ratio (CLR)
//! map between warp derivatives and the zero-integral function space.

use crate::basis::Warp;
use crate::diag;
use crate::error::{Error, Result};
use crate::fd::Grid;

/// Clamp applied to probabilities before taking the logit.
pub const LOGIT_EPS: f64 = 1e-6;

/// Bound on the exponent fed to `exp` inside [`clr_inverse`], to keep the
/// increments finite; exceeding values are clamped and counted.
pub const CLR_EXP_BOUND: f64 = 700.0;

/// Largest magnitude the clamped logit can produce: ln((1 - eps) / eps).
pub fn logit_bound() -> f64 {
    ((1.0 - LOGIT_EPS) / LOGIT_EPS).ln()
}

/// Logit of a single probability, clamped into [eps, 1 - eps] first.
/// Returns the value and whether clamping occurred. Saturated inputs map to
/// exactly +-logit_bound() so the clamp is symmetric.
fn logit_one(mu: f64) -> (f64, bool) {
    if mu < LOGIT_EPS {
        (-logit_bound(), true)
    } else if mu > 1.0 - LOGIT_EPS {
        (logit_bound(), true)
    } else {
        ((mu / (1.0 - mu)).ln(), false)
    }
}

/// Clamped logit of one probability. Clamp events are counted in
/// diagnostics.
pub fn logit_scalar(mu: f64) -> f64 {
    let (v, clamped) = logit_one(mu);
    if clamped {
        diag::counters().count_logit_clamps(1);
    }
    v
}

/// Elementwise clamped logit. Clamp events are counted in diagnostics.
pub fn logit(values: &[f64]) -> Vec<f64> {
    let mut clamps = 0u64;
    let out = values
        .iter()
        .map(|&mu| {
            let (v, clamped) = logit_one(mu);
            if clamped {
                clamps += 1;
            }
            v
        })
        .collect();
    diag::counters().count_logit_clamps(clamps);
    out
}

/// Numerically stable inverse logit, strictly inside (0, 1) for all finite
/// inputs (the saturated tails are nudged off the boundary).
pub fn inverse_logit_scalar(x: f64) -> f64 {
    let value = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    value.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// Elementwise inverse logit.
pub fn inverse_logit(values: &[f64]) -> Vec<f64> {
    values.iter().map(|&x| inverse_logit_scalar(x)).collect()
}

/// A zero-integral curve on a grid: the CLR image of a warp derivative.
#[derive(Debug, Clone, PartialEq)]
pub struct ClrCurve {
    grid: Grid,
    values: Vec<f64>,
}

impl ClrCurve {
    /// Validates the zero-integral constraint (trapezoidal, within 1e-8).
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DomainMismatch(format!(
                "{} values for a {}-point grid",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::DomainMismatch("CLR values must be finite".into()));
        }
        let integral = grid.integrate(&values);
        if integral.abs() > 1e-8 {
            return Err(Error::DomainMismatch(format!(
                "CLR curve integrates to {integral:.3e}, expected 0"
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// CLR transform of a positive derivative sampled on a grid:
/// log-values centered by their trapezoidal mean, so the result integrates
/// to zero. Scale invariance is exact in real arithmetic: multiplying the
/// input by any positive constant shifts the log by a constant that the
/// centering removes.
pub fn clr_forward(derivative: &[f64], grid: &Grid) -> Result<ClrCurve> {
    if derivative.len() != grid.len() {
        return Err(Error::DomainMismatch(format!(
            "{} derivative values for a {}-point grid",
            derivative.len(),
            grid.len()
        )));
    }
    if let Some(index) = derivative.iter().position(|&v| v <= 0.0 || v.is_nan()) {
        return Err(Error::NonPositiveDerivative { index });
    }
    let logs: Vec<f64> = derivative.iter().map(|v| v.ln()).collect();
    let mean = grid.integrate(&logs);
    let mut values: Vec<f64> = logs.iter().map(|v| v - mean).collect();
    // One recentering pass keeps the integral at rounding level.
    let residual = grid.integrate(&values);
    for v in &mut values {
        *v -= residual;
    }
    ClrCurve::new(grid.clone(), values)
}

/// Inverse CLR: maps a zero-integral curve back to warp values on the grid
/// via the normalized cumulative integral of its exponential. The output is
/// strictly increasing with endpoints exactly 0 and 1.
pub fn clr_inverse(eta: &ClrCurve) -> Vec<f64> {
    clr_inverse_values(eta.values(), eta.grid())
}

/// [`clr_inverse`] on a raw vector; exponents beyond the overflow bound are
/// clamped and counted in diagnostics.
pub fn clr_inverse_values(eta: &[f64], grid: &Grid) -> Vec<f64> {
    debug_assert_eq!(eta.len(), grid.len());
    let mut clamps = 0u64;
    let exps: Vec<f64> = eta
        .iter()
        .map(|&v| {
            let bounded = if v.abs() > CLR_EXP_BOUND {
                clamps += 1;
                v.clamp(-CLR_EXP_BOUND, CLR_EXP_BOUND)
            } else {
                v
            };
            bounded.exp()
        })
        .collect();
    diag::counters().count_clr_exp_clamps(clamps);
    let cumulative = grid.cumulative_integral(&exps);
    let total = cumulative[cumulative.len() - 1];
    let mut out: Vec<f64> = cumulative.iter().map(|c| c / total).collect();
    out[0] = 0.0;
    let last = out.len() - 1;
    out[last] = 1.0;
    out
}

/// Analytic derivative of a warp sampled on a grid.
///
/// Errors if the derivative is not strictly positive everywhere on the grid.
pub fn warp_derivative(warp: &Warp, grid: &Grid) -> Result<Vec<f64>> {
    let derivative = warp.as_curve().derivative();
    let values: Vec<f64> = grid.points().iter().map(|&s| derivative.eval(s)).collect();
    if let Some(index) = values.iter().position(|&v| v <= 0.0 || v.is_nan()) {
        return Err(Error::NonPositiveDerivative { index });
    }
    Ok(values)
}
