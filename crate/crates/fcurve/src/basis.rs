//! Open (clamped) B-spline bases on [0, 1], least-squares fitting, spline
//! curves with analytic derivatives, and monotone warp functions.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fd::Grid;

/// Tolerance for warp coefficient validation (endpoint pinning, monotonicity).
const WARP_COEF_TOL: f64 = 1e-9;

/// A clamped B-spline basis on [0, 1] with equally spaced interior knots.
///
/// The number of basis functions is `degree + 1 + n_interior`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineBasis {
    degree: usize,
    knots: Vec<f64>,
}

impl SplineBasis {
    /// Basis of dimension `num_basis` for the given degree; the interior
    /// knots (`num_basis - degree - 1` of them) are equally spaced in (0, 1).
    pub fn with_dimension(degree: usize, num_basis: usize) -> Result<Self> {
        if num_basis < degree + 1 {
            return Err(Error::InvalidConfig(format!(
                "a degree-{degree} basis needs at least {} functions, got {num_basis}",
                degree + 1
            )));
        }
        let n_interior = num_basis - degree - 1;
        let mut knots = vec![0.0; degree + 1];
        for j in 1..=n_interior {
            knots.push(j as f64 / (n_interior + 1) as f64);
        }
        knots.extend(std::iter::repeat_n(1.0, degree + 1));
        Ok(Self { degree, knots })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Number of basis functions.
    pub fn num_basis(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    /// Full clamped knot vector.
    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Interior knots, excluding the clamped boundary copies.
    pub fn interior_knots(&self) -> &[f64] {
        &self.knots[self.degree + 1..self.knots.len() - self.degree - 1]
    }

    /// Greville abscissae: averages of `degree` consecutive interior-adjacent
    /// knots. Using them as coefficients reproduces the identity function.
    pub fn greville_abscissae(&self) -> Vec<f64> {
        let p = self.degree.max(1);
        (0..self.num_basis())
            .map(|m| self.knots[m + 1..m + 1 + p].iter().sum::<f64>() / p as f64)
            .collect()
    }

    /// Index of the knot span containing `x` (clamped to valid spans).
    fn find_span(&self, x: f64) -> usize {
        let p = self.degree;
        let n = self.num_basis() - 1;
        if x >= self.knots[n + 1] {
            return n;
        }
        if x <= self.knots[p] {
            return p;
        }
        // Binary search for the span with knots[i] <= x < knots[i + 1].
        let (mut lo, mut hi) = (p, n + 1);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if x < self.knots[mid] {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo
    }

    /// The `degree + 1` basis values that are non-zero on the span of `x`,
    /// returned with the index of the first one.
    ///
    /// This is the standard triangular Cox-de Boor scheme; values are
    /// non-negative and sum to one by construction.
    fn nonzero_basis(&self, x: f64) -> (usize, Vec<f64>) {
        let p = self.degree;
        let span = self.find_span(x);
        let mut values = vec![0.0; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        values[0] = 1.0;
        for j in 1..=p {
            left[j] = x - self.knots[span + 1 - j];
            right[j] = self.knots[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = values[r] / (right[r + 1] + left[j - r]);
                values[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            values[j] = saved;
        }
        (span - p, values)
    }

    /// Evaluates a spline with the given coefficients at `x` in [0, 1].
    pub fn eval_spline(&self, coefficients: &[f64], x: f64) -> f64 {
        debug_assert_eq!(coefficients.len(), self.num_basis());
        let (first, values) = self.nonzero_basis(x);
        values
            .iter()
            .enumerate()
            .map(|(j, v)| v * coefficients[first + j])
            .sum()
    }
}

/// Dense evaluation matrix: row per point, column per basis function.
///
/// Points must lie in [0, 1]. Rows are non-negative and sum to 1.
pub fn eval_basis(basis: &SplineBasis, points: &[f64]) -> Result<Array2<f64>> {
    if points.iter().any(|x| !x.is_finite() || *x < 0.0 || *x > 1.0) {
        return Err(Error::DomainMismatch(
            "basis evaluation points must lie in [0, 1]".into(),
        ));
    }
    let mut out = Array2::zeros((points.len(), basis.num_basis()));
    for (i, &x) in points.iter().enumerate() {
        let (first, values) = basis.nonzero_basis(x);
        for (j, v) in values.iter().enumerate() {
            out[[i, first + j]] = *v;
        }
    }
    Ok(out)
}

/// Least-squares spline fit of `values` observed at `points`, with an
/// optional ridge penalty on the coefficients.
///
/// Requires at least as many observations as basis functions.
pub fn fit_least_squares(
    basis: &SplineBasis,
    points: &[f64],
    values: &[f64],
    ridge: f64,
) -> Result<Vec<f64>> {
    let k = basis.num_basis();
    if points.len() != values.len() {
        return Err(Error::DomainMismatch(format!(
            "{} points vs {} values",
            points.len(),
            values.len()
        )));
    }
    if points.len() < k {
        return Err(Error::Underdetermined {
            points: points.len(),
            basis: k,
        });
    }
    if ridge < 0.0 || !ridge.is_finite() {
        return Err(Error::InvalidConfig(format!("ridge must be >= 0, got {ridge}")));
    }
    let design = eval_basis(basis, points)?;
    let x = nalgebra::DMatrix::from_fn(points.len(), k, |i, j| design[[i, j]]);
    let y = nalgebra::DVector::from_column_slice(values);
    if ridge > 0.0 {
        let mut normal = x.transpose() * &x;
        for j in 0..k {
            normal[(j, j)] += ridge;
        }
        let rhs = x.transpose() * y;
        let solved = normal
            .cholesky()
            .map(|chol| chol.solve(&rhs))
            .or_else(|| {
                // Near-singular normal equations: fall back to an SVD solve.
                (nalgebra::DMatrix::from_fn(k, k, |i, j| {
                    (0..points.len()).map(|r| x[(r, i)] * x[(r, j)]).sum::<f64>()
                        + if i == j { ridge } else { 0.0 }
                }))
                .svd(true, true)
                .solve(&rhs, 1e-12)
                .ok()
            })
            .ok_or_else(|| Error::InvalidConfig("normal equations unsolvable".into()))?;
        Ok(solved.as_slice().to_vec())
    } else {
        let solved = x
            .svd(true, true)
            .solve(&y, 1e-12)
            .map_err(|e| Error::InvalidConfig(format!("least-squares solve failed: {e}")))?;
        Ok(solved.as_slice().to_vec())
    }
}

/// A spline function: a basis plus one coefficient per basis function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineCurve {
    basis: SplineBasis,
    coefficients: Vec<f64>,
}

impl SplineCurve {
    pub fn new(basis: SplineBasis, coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.len() != basis.num_basis() {
            return Err(Error::DomainMismatch(format!(
                "{} coefficients for a {}-dimensional basis",
                coefficients.len(),
                basis.num_basis()
            )));
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::DomainMismatch("coefficients must be finite".into()));
        }
        Ok(Self { basis, coefficients })
    }

    pub fn basis(&self) -> &SplineBasis {
        &self.basis
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.basis.eval_spline(&self.coefficients, x)
    }

    pub fn eval_many(&self, points: &[f64]) -> Vec<f64> {
        points.iter().map(|&x| self.eval(x)).collect()
    }

    /// Analytic derivative as a spline of degree `degree - 1` over the knot
    /// vector with one boundary knot dropped at each end.
    pub fn derivative(&self) -> SplineCurve {
        let p = self.basis.degree;
        if p == 0 {
            // Piecewise constants differentiate to zero a.e.
            let basis = SplineBasis::with_dimension(0, self.basis.num_basis()).unwrap();
            let coefficients = vec![0.0; basis.num_basis()];
            return SplineCurve { basis, coefficients };
        }
        let knots = &self.basis.knots;
        let derived_knots: Vec<f64> = knots[1..knots.len() - 1].to_vec();
        let coefficients: Vec<f64> = (1..self.coefficients.len())
            .map(|m| {
                let denom = knots[m + p] - knots[m];
                if denom == 0.0 {
                    0.0
                } else {
                    p as f64 * (self.coefficients[m] - self.coefficients[m - 1]) / denom
                }
            })
            .collect();
        let basis = SplineBasis {
            degree: p - 1,
            knots: derived_knots,
        };
        SplineCurve { basis, coefficients }
    }
}

/// A monotone time-warping function on [0, 1], represented as a spline with
/// non-decreasing coefficients pinned to 0 and 1 at the ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Warp {
    basis: SplineBasis,
    coefficients: Vec<f64>,
}

impl Warp {
    /// Validates endpoint pinning and coefficient monotonicity.
    pub fn new(basis: SplineBasis, mut coefficients: Vec<f64>) -> Result<Self> {
        if basis.degree() < 1 {
            return Err(Error::InvalidWarp("warp basis must have degree >= 1".into()));
        }
        if coefficients.len() != basis.num_basis() {
            return Err(Error::InvalidWarp(format!(
                "{} coefficients for a {}-dimensional basis",
                coefficients.len(),
                basis.num_basis()
            )));
        }
        let k = coefficients.len();
        if coefficients[0].abs() > WARP_COEF_TOL || (coefficients[k - 1] - 1.0).abs() > WARP_COEF_TOL {
            return Err(Error::InvalidWarp(
                "warp coefficients must start at 0 and end at 1".into(),
            ));
        }
        if coefficients.windows(2).any(|w| w[1] < w[0] - WARP_COEF_TOL) {
            return Err(Error::InvalidWarp(
                "warp coefficients must be non-decreasing".into(),
            ));
        }
        // Snap the endpoints exactly and clear sub-tolerance decreases.
        coefficients[0] = 0.0;
        coefficients[k - 1] = 1.0;
        for m in 1..k {
            if coefficients[m] < coefficients[m - 1] {
                coefficients[m] = coefficients[m - 1];
            }
        }
        Ok(Self { basis, coefficients })
    }

    /// The identity warp: Greville abscissae as coefficients give
    /// gamma(s) = s exactly.
    pub fn identity(basis: &SplineBasis) -> Result<Self> {
        Warp::new(basis.clone(), basis.greville_abscissae())
    }

    pub fn basis(&self) -> &SplineBasis {
        &self.basis
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// The warp as a plain spline curve.
    pub fn as_curve(&self) -> SplineCurve {
        SplineCurve {
            basis: self.basis.clone(),
            coefficients: self.coefficients.clone(),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.basis.eval_spline(&self.coefficients, x)
    }

    /// Maximum absolute deviation from the identity on `grid`.
    pub fn max_deviation_from_identity(&self, grid: &Grid) -> f64 {
        grid.points()
            .iter()
            .map(|&s| (self.eval(s) - s).abs())
            .fold(0.0, f64::max)
    }
}

/// Evaluates a warp on a grid and verifies that the values are strictly
/// increasing there (positive forward differences).
pub fn eval_warp(warp: &Warp, grid: &Grid) -> Result<Vec<f64>> {
    let mut values: Vec<f64> = grid.points().iter().map(|&s| warp.eval(s)).collect();
    // Clamped-basis evaluation pins the endpoints up to rounding.
    values[0] = 0.0;
    let last = values.len() - 1;
    values[last] = 1.0;
    if let Some(pos) = values.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::InvalidWarp(format!(
            "warp is not strictly increasing between grid points {pos} and {}",
            pos + 1
        )));
    }
    Ok(values)
}

/// Convenience: evaluate a coefficient vector against a basis on a grid.
pub fn eval_coefficients_on_grid(basis: &SplineBasis, coefficients: &[f64], grid: &Grid) -> Array1<f64> {
    Array1::from_iter(
        grid.points()
            .iter()
            .map(|&x| basis.eval_spline(coefficients, x)),
    )
}
