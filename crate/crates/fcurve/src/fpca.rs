//! Functional principal component analysis: univariate eigensystems,
//! weighted bivariate (amplitude, phase) eigensystems, reconstruction-based
//! weight selection, and modes of variation on the probability scale.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2};
use rayon::prelude::*;

use crate::diag;
use crate::error::{Error, Result};
use crate::fd::{FunctionalSample, Grid};
use crate::transforms::{clr_inverse_values, inverse_logit_scalar};

/// Relative threshold below which an eigenvalue counts as numerically zero.
const EIGEN_REL_FLOOR: f64 = 1e-12;

/// Total-variance threshold below which a system is flagged degenerate and
/// its explained-variance fractions are reported as zero.
const DEGENERATE_VARIANCE_TOL: f64 = 1e-12;

/// Reconstruction errors within this distance of the minimum count as tied
/// during weight selection, and the tie resolves to the smallest weight.
/// Differences this small are far below any practical effect on a
/// probability-scale integrated squared error.
const MISE_TIE_TOL: f64 = 1e-6;

/// Result of a univariate FPCA: eigenpairs of the quadrature-weighted
/// covariance, subject scores, and explained-variance fractions.
#[derive(Debug, Clone)]
pub struct UnivariateEigenSystem {
    pub(crate) grid: Grid,
    pub(crate) mean: Vec<f64>,
    pub(crate) eigenvalues: Vec<f64>,
    /// One eigenfunction per row, orthonormal under trapezoidal quadrature.
    pub(crate) eigenfunctions: Array2<f64>,
    /// Scores: row per subject, column per component.
    pub(crate) scores: Array2<f64>,
    /// Fraction of variance explained by each returned component,
    /// normalized over the returned components; zeros when degenerate.
    pub(crate) pve: Vec<f64>,
    /// Set when the total variance is numerically zero, in which case the
    /// explained-variance fractions are meaningless.
    pub(crate) degenerate: bool,
}

impl UnivariateEigenSystem {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn mean(&self) -> &[f64] {
        &self.mean
    }
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }
    pub fn eigenfunctions(&self) -> &Array2<f64> {
        &self.eigenfunctions
    }
    pub fn scores(&self) -> &Array2<f64> {
        &self.scores
    }
    pub fn pve(&self) -> &[f64] {
        &self.pve
    }
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }
}

/// Result of a weighted bivariate FPCA over paired (amplitude, phase)
/// samples. Eigenfunction pairs are orthonormal under the weighted inner
/// product `int w w' + d_weight * int z z'`.
#[derive(Debug, Clone)]
pub struct BivariateEigenSystem {
    pub(crate) grid: Grid,
    pub(crate) d_weight: f64,
    pub(crate) mean_amplitude: Vec<f64>,
    pub(crate) mean_phase: Vec<f64>,
    pub(crate) eigenvalues: Vec<f64>,
    pub(crate) amplitude_eigenfunctions: Array2<f64>,
    pub(crate) phase_eigenfunctions: Array2<f64>,
    pub(crate) scores: Array2<f64>,
    pub(crate) pve: Vec<f64>,
    pub(crate) degenerate: bool,
}

impl BivariateEigenSystem {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn d_weight(&self) -> f64 {
        self.d_weight
    }
    pub fn mean_amplitude(&self) -> &[f64] {
        &self.mean_amplitude
    }
    pub fn mean_phase(&self) -> &[f64] {
        &self.mean_phase
    }
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }
    pub fn amplitude_eigenfunctions(&self) -> &Array2<f64> {
        &self.amplitude_eigenfunctions
    }
    pub fn phase_eigenfunctions(&self) -> &Array2<f64> {
        &self.phase_eigenfunctions
    }
    pub fn scores(&self) -> &Array2<f64> {
        &self.scores
    }
    pub fn pve(&self) -> &[f64] {
        &self.pve
    }
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }
    pub fn n_components(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Reconstructs subject `i` from the first `k` components, returning the
    /// (amplitude, phase) pair on the grid.
    pub fn reconstruct(&self, i: usize, k: usize) -> (Vec<f64>, Vec<f64>) {
        let n_points = self.grid.len();
        let k = k.min(self.n_components());
        let mut amplitude = self.mean_amplitude.clone();
        let mut phase = self.mean_phase.clone();
        for c in 0..k {
            let score = self.scores[[i, c]];
            for j in 0..n_points {
                amplitude[j] += score * self.amplitude_eigenfunctions[[c, j]];
                phase[j] += score * self.phase_eigenfunctions[[c, j]];
            }
        }
        (amplitude, phase)
    }
}

/// Sorted (descending) eigenvalues and matching eigenvector columns of a
/// symmetric matrix; eigenvalues are clamped at zero from below.
fn symmetric_eigen_desc(matrix: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = matrix.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let dim = eig.eigenvectors.nrows();
    let vectors = DMatrix::from_fn(dim, order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Applies the sign convention: integral of the eigenfunction non-negative,
/// with the first non-negligible coordinate positive as the tie-break.
/// Returns true when the function was flipped.
fn canonical_sign(values: &[f64], grid: &Grid) -> bool {
    let integral = grid.integrate(values);
    if integral.abs() > 1e-10 {
        return integral < 0.0;
    }
    for &v in values {
        if v.abs() > 1e-10 {
            return v < 0.0;
        }
    }
    false
}

/// Full-rank decomposition of a centered data block: all eigenpairs with
/// eigenvalue above the numerical-rank floor. Eigenfunctions are rows;
/// scores are subjects x components.
fn decompose_block(centered: &Array2<f64>, grid: &Grid) -> (Vec<f64>, Array2<f64>, Array2<f64>) {
    let (n, n_points) = centered.dim();
    let weights = grid.trapezoid_weights();
    let sqrt_weights: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
    let denom = (n - 1).max(1) as f64;

    // Weight-folded data: rows scaled by sqrt quadrature weights columnwise.
    let folded = DMatrix::from_fn(n, n_points, |i, j| centered[[i, j]] * sqrt_weights[j]);

    let (raw_values, eigenfunctions) = if n <= n_points {
        // Small-side route: the n x n Gram matrix shares its non-zero
        // spectrum with the folded covariance.
        let gram = &folded * folded.transpose() / denom;
        let (values, vectors) = symmetric_eigen_desc(gram);
        let mut functions = Array2::zeros((values.len(), n_points));
        for (c, &lambda) in values.iter().enumerate() {
            if lambda > 0.0 {
                let u = vectors.column(c);
                let phi = folded.transpose() * u;
                let scale = 1.0 / (denom * lambda).sqrt();
                for j in 0..n_points {
                    functions[[c, j]] = phi[j] * scale / sqrt_weights[j];
                }
            }
        }
        (values, functions)
    } else {
        let covariance = folded.transpose() * &folded / denom;
        let (values, vectors) = symmetric_eigen_desc(covariance);
        let mut functions = Array2::zeros((values.len(), n_points));
        for c in 0..values.len() {
            for j in 0..n_points {
                functions[[c, j]] = vectors[(j, c)] / sqrt_weights[j];
            }
        }
        (values, functions)
    };

    // Keep components above the numerical-rank floor.
    let floor = raw_values.first().copied().unwrap_or(0.0) * EIGEN_REL_FLOOR;
    let rank = raw_values.iter().take_while(|&&v| v > floor && v > 0.0).count();
    let eigenvalues: Vec<f64> = raw_values[..rank].to_vec();
    let mut functions = Array2::zeros((rank, n_points));
    let mut scores = Array2::zeros((n, rank));
    for c in 0..rank {
        let mut row: Vec<f64> = (0..n_points).map(|j| eigenfunctions[[c, j]]).collect();
        if canonical_sign(&row, grid) {
            for v in &mut row {
                *v = -*v;
            }
        }
        for j in 0..n_points {
            functions[[c, j]] = row[j];
        }
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n_points {
                acc += weights[j] * centered[[i, j]] * row[j];
            }
            scores[[i, c]] = acc;
        }
    }
    (eigenvalues, functions, scores)
}

fn centered_values(sample: &FunctionalSample) -> (Vec<f64>, Array2<f64>) {
    let mean = sample.mean_curve();
    let mut centered = sample.values().clone();
    for mut row in centered.rows_mut() {
        for (v, m) in row.iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    (mean, centered)
}

/// Univariate FPCA of a sample: the leading `k` eigenpairs of the
/// quadrature-weighted covariance, subject scores, and explained-variance
/// fractions normalized over the returned components.
///
/// Requires `n >= 2` curves and `1 <= k <= min(n - 1, grid size)`.
pub fn fpca_univariate(sample: &FunctionalSample, k: usize) -> Result<UnivariateEigenSystem> {
    let n = sample.n_curves();
    let n_points = sample.n_points();
    if n < 2 {
        return Err(Error::EmptySample(format!(
            "univariate FPCA needs at least 2 curves, got {n}"
        )));
    }
    let k_max = (n - 1).min(n_points);
    if k == 0 || k > k_max {
        return Err(Error::TruncationError(format!(
            "requested {k} components; admissible range is 1..={k_max} for {n} curves on {n_points} points"
        )));
    }
    let (mean, centered) = centered_values(sample);
    let (all_values, all_functions, all_scores) = decompose_block(&centered, sample.grid());

    let rank = all_values.len();
    let mut eigenvalues = vec![0.0; k];
    let mut eigenfunctions = Array2::zeros((k, n_points));
    let mut scores = Array2::zeros((n, k));
    for c in 0..k.min(rank) {
        eigenvalues[c] = all_values[c];
        for j in 0..n_points {
            eigenfunctions[[c, j]] = all_functions[[c, j]];
        }
        for i in 0..n {
            scores[[i, c]] = all_scores[[i, c]];
        }
    }
    if k > rank {
        diag::counters().count_eigenvalue_floor();
        log::debug!("univariate FPCA: {k} components requested, numerical rank is {rank}");
    }

    let total: f64 = eigenvalues.iter().sum();
    let degenerate = total <= DEGENERATE_VARIANCE_TOL;
    let pve = if degenerate {
        vec![0.0; k]
    } else {
        eigenvalues.iter().map(|l| l / total).collect()
    };
    Ok(UnivariateEigenSystem {
        grid: sample.grid().clone(),
        mean,
        eigenvalues,
        eigenfunctions,
        scores,
        pve,
        degenerate,
    })
}

fn check_pairing(a: &FunctionalSample, b: &FunctionalSample) -> Result<()> {
    if a.grid() != b.grid() {
        return Err(Error::PairingError(
            "paired samples must share one grid".into(),
        ));
    }
    if a.n_curves() != b.n_curves() {
        return Err(Error::PairingError(format!(
            "paired samples have {} vs {} curves",
            a.n_curves(),
            b.n_curves()
        )));
    }
    if a.labels() != b.labels() {
        return Err(Error::PairingError(
            "paired samples must carry identical group labels".into(),
        ));
    }
    Ok(())
}

/// Weighted bivariate FPCA of paired (amplitude, phase) samples.
///
/// The phase block enters the inner product with weight `d_weight`; the
/// estimation is component-wise: a full-rank univariate decomposition per
/// block followed by the eigenproblem of the joint score covariance. At most
/// `k` components are returned (fewer when the data have lower rank).
pub fn fpca_bivariate(
    amplitude: &FunctionalSample,
    phase: &FunctionalSample,
    d_weight: f64,
    k: usize,
) -> Result<BivariateEigenSystem> {
    check_pairing(amplitude, phase)?;
    if !d_weight.is_finite() || d_weight <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "phase weight must be positive and finite, got {d_weight}"
        )));
    }
    if k == 0 {
        return Err(Error::TruncationError("requested 0 components".into()));
    }
    let n = amplitude.n_curves();
    if n < 2 {
        return Err(Error::EmptySample(format!(
            "bivariate FPCA needs at least 2 curves, got {n}"
        )));
    }
    let grid = amplitude.grid().clone();
    let n_points = grid.len();
    let weights = grid.trapezoid_weights();

    let (mean_amplitude, centered_amplitude) = centered_values(amplitude);
    let (mean_phase, centered_phase) = centered_values(phase);

    // Scaling the phase block by sqrt(d_weight) turns the weighted inner
    // product into the plain concatenated one.
    let sqrt_d = d_weight.sqrt();
    let scaled_phase = centered_phase.mapv(|v| v * sqrt_d);

    let (_, amp_functions, amp_scores) = decompose_block(&centered_amplitude, &grid);
    let (_, phase_functions, phase_scores) = decompose_block(&scaled_phase, &grid);
    let m_a = amp_functions.nrows();
    let m_b = phase_functions.nrows();
    let m = m_a + m_b;
    if m == 0 {
        // Both blocks constant: a degenerate system with zero functions.
        return Ok(BivariateEigenSystem {
            grid,
            d_weight,
            mean_amplitude,
            mean_phase,
            eigenvalues: vec![0.0],
            amplitude_eigenfunctions: Array2::zeros((1, n_points)),
            phase_eigenfunctions: Array2::zeros((1, n_points)),
            scores: Array2::zeros((n, 1)),
            pve: vec![0.0],
            degenerate: true,
        });
    }

    // Joint covariance of the stacked block scores.
    let theta = DMatrix::from_fn(n, m, |i, c| {
        if c < m_a {
            amp_scores[[i, c]]
        } else {
            phase_scores[[i, c - m_a]]
        }
    });
    let joint = theta.transpose() * &theta / (n - 1) as f64;
    let (joint_values, joint_vectors) = symmetric_eigen_desc(joint);

    let k_eff = k.min(m);
    if k_eff < k {
        log::debug!("bivariate FPCA: {k} components requested, rank allows {k_eff}");
    }

    let mut eigenvalues = Vec::with_capacity(k_eff);
    let mut amplitude_eigenfunctions = Array2::zeros((k_eff, n_points));
    let mut phase_eigenfunctions = Array2::zeros((k_eff, n_points));
    let mut scores = Array2::zeros((n, k_eff));
    for c in 0..k_eff {
        eigenvalues.push(joint_values[c]);
        let coeff = joint_vectors.column(c);
        let mut psi = vec![0.0; n_points];
        let mut phi = vec![0.0; n_points];
        for j in 0..n_points {
            let mut acc_a = 0.0;
            for b in 0..m_a {
                acc_a += coeff[b] * amp_functions[[b, j]];
            }
            let mut acc_b = 0.0;
            for b in 0..m_b {
                acc_b += coeff[m_a + b] * phase_functions[[b, j]];
            }
            psi[j] = acc_a;
            // Map the scaled-block function back to original phase units.
            phi[j] = acc_b / sqrt_d;
        }
        // Sign convention on the amplitude part; a numerically zero
        // amplitude part defers to the phase part.
        let amp_norm: f64 = psi.iter().map(|v| v * v).sum::<f64>().sqrt();
        let flip = if amp_norm > 1e-10 {
            canonical_sign(&psi, &grid)
        } else {
            canonical_sign(&phi, &grid)
        };
        if flip {
            for v in psi.iter_mut().chain(phi.iter_mut()) {
                *v = -*v;
            }
        }
        for j in 0..n_points {
            amplitude_eigenfunctions[[c, j]] = psi[j];
            phase_eigenfunctions[[c, j]] = phi[j];
        }
        // Scores under the weighted inner product against centered data.
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n_points {
                acc += weights[j]
                    * (centered_amplitude[[i, j]] * psi[j]
                        + d_weight * centered_phase[[i, j]] * phi[j]);
            }
            scores[[i, c]] = acc;
        }
    }

    let total: f64 = eigenvalues.iter().sum();
    let degenerate = total <= DEGENERATE_VARIANCE_TOL;
    let pve = if degenerate {
        vec![0.0; k_eff]
    } else {
        eigenvalues.iter().map(|l| l / total).collect()
    };
    Ok(BivariateEigenSystem {
        grid,
        d_weight,
        mean_amplitude,
        mean_phase,
        eigenvalues,
        amplitude_eigenfunctions,
        phase_eigenfunctions,
        scores,
        pve,
        degenerate,
    })
}

/// One weight candidate with its mean integrated squared reconstruction
/// error; candidates that produced non-finite errors are excluded.
#[derive(Debug, Clone, Copy)]
pub struct WeightCandidate {
    pub d: f64,
    pub mise: Option<f64>,
}

/// Outcome of the reconstruction-based weight search.
#[derive(Debug, Clone)]
pub struct WeightSelection {
    /// The selected weight: smallest candidate attaining the minimum error.
    pub selected: f64,
    /// One entry per candidate, in ascending weight order.
    pub table: Vec<WeightCandidate>,
}

/// The default weight search grid: 0.1, 0.2, ..., 5.0.
pub fn default_weight_grid() -> Vec<f64> {
    (1..=50).map(|i| i as f64 / 10.0).collect()
}

/// Mean integrated squared error of probability-curve reconstructions from a
/// `k`-component bivariate system at weight `d`.
fn reconstruction_mise(
    aligned_logit: &FunctionalSample,
    warp_clr: &FunctionalSample,
    target_prob: &FunctionalSample,
    k: usize,
    d: f64,
) -> Result<f64> {
    let system = fpca_bivariate(aligned_logit, warp_clr, d, k)?;
    let grid = aligned_logit.grid();
    let n = aligned_logit.n_curves();
    let n_points = grid.len();
    let mut total = 0.0;
    for i in 0..n {
        let (amplitude, phase) = system.reconstruct(i, k);
        let gamma = clr_inverse_values(&phase, grid);
        let mut squared_error = Vec::with_capacity(n_points);
        for (j, &g) in gamma.iter().enumerate() {
            let mu = inverse_logit_scalar(grid.interp(&amplitude, g));
            let diff = mu - target_prob.values()[[i, j]];
            squared_error.push(diff * diff);
        }
        total += grid.integrate(&squared_error);
    }
    Ok(total / n as f64)
}

/// Selects the phase weight by minimizing the mean integrated squared error
/// between reconstructed probability curves and `target_prob` over the
/// candidate grid. Ties resolve to the smallest weight; candidates whose
/// error is non-finite are excluded and counted in diagnostics.
pub fn select_weight(
    aligned_logit: &FunctionalSample,
    warp_clr: &FunctionalSample,
    target_prob: &FunctionalSample,
    k: usize,
    d_grid: &[f64],
) -> Result<WeightSelection> {
    check_pairing(aligned_logit, warp_clr)?;
    check_pairing(aligned_logit, target_prob)?;
    if d_grid.is_empty() {
        return Err(Error::InvalidConfig("weight grid is empty".into()));
    }
    if d_grid.iter().any(|d| !d.is_finite() || *d <= 0.0) {
        return Err(Error::InvalidConfig(
            "weight candidates must be positive and finite".into(),
        ));
    }
    let mut candidates: Vec<f64> = d_grid.to_vec();
    candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    candidates.dedup();

    let results: Vec<Result<f64>> = candidates
        .par_iter()
        .map(|&d| reconstruction_mise(aligned_logit, warp_clr, target_prob, k, d))
        .collect();

    let mut table = Vec::with_capacity(candidates.len());
    for (&d, result) in candidates.iter().zip(results) {
        let mise = match result {
            Ok(value) if value.is_finite() => Some(value),
            Ok(value) => {
                diag::counters().count_excluded_weight_candidate();
                log::warn!("weight candidate {d} produced non-finite error {value}; excluded");
                None
            }
            Err(err) => {
                diag::counters().count_excluded_weight_candidate();
                log::warn!("weight candidate {d} failed: {err}; excluded");
                None
            }
        };
        table.push(WeightCandidate { d, mise });
    }
    let best = table
        .iter()
        .filter_map(|c| c.mise)
        .fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        return Err(Error::TruncationError(
            "every weight candidate was excluded".into(),
        ));
    }
    // Smallest weight among the near-minimal candidates.
    let selected = table
        .iter()
        .find(|c| c.mise.is_some_and(|m| m <= best + MISE_TIE_TOL))
        .map(|c| c.d)
        .expect("a finite minimum implies a qualifying candidate");
    Ok(WeightSelection { selected, table })
}

/// Perturbations of the overall mean by one component, evaluated on the
/// probability scale. `minus`/`plus` move two standard deviations along the
/// component in the indicated direction.
#[derive(Debug, Clone)]
pub struct ModesOfVariation {
    pub component: usize,
    pub eigenvalue: f64,
    pub pve: f64,
    pub overall_mean: Vec<f64>,
    pub amplitude_minus: Vec<f64>,
    pub amplitude_plus: Vec<f64>,
    pub phase_minus: Vec<f64>,
    pub phase_plus: Vec<f64>,
    pub joint_minus: Vec<f64>,
    pub joint_plus: Vec<f64>,
}

/// Modes of variation for component `k` (1-based) of a bivariate system.
///
/// Amplitude modes perturb the registered mean curve before composing with
/// the mean warp; phase modes perturb the mean warp through the CLR inverse;
/// joint modes do both. Compositions use linear interpolation on the grid.
pub fn modes_of_variation(
    system: &BivariateEigenSystem,
    k: usize,
    mean_warp_clr: &[f64],
) -> Result<ModesOfVariation> {
    if k == 0 || k > system.n_components() {
        return Err(Error::TruncationError(format!(
            "component {k} outside 1..={}",
            system.n_components()
        )));
    }
    let grid = &system.grid;
    if mean_warp_clr.len() != grid.len() {
        return Err(Error::DomainMismatch(format!(
            "{} mean-warp values for a {}-point grid",
            mean_warp_clr.len(),
            grid.len()
        )));
    }
    let idx = k - 1;
    let mut lambda = system.eigenvalues[idx];
    if lambda < 0.0 {
        log::warn!("component {k} eigenvalue {lambda:.3e} clamped to 0");
        lambda = 0.0;
    }
    let factor = 2.0 * lambda.sqrt();
    let n_points = grid.len();

    let psi: Vec<f64> = (0..n_points)
        .map(|j| system.amplitude_eigenfunctions[[idx, j]])
        .collect();
    let phi: Vec<f64> = (0..n_points)
        .map(|j| system.phase_eigenfunctions[[idx, j]])
        .collect();

    let nu_mean = &system.mean_amplitude;
    let nu_minus: Vec<f64> = nu_mean.iter().zip(&psi).map(|(m, p)| m - factor * p).collect();
    let nu_plus: Vec<f64> = nu_mean.iter().zip(&psi).map(|(m, p)| m + factor * p).collect();

    let gamma_mean = clr_inverse_values(mean_warp_clr, grid);
    let eta_minus: Vec<f64> = mean_warp_clr.iter().zip(&phi).map(|(m, p)| m - factor * p).collect();
    let eta_plus: Vec<f64> = mean_warp_clr.iter().zip(&phi).map(|(m, p)| m + factor * p).collect();
    let gamma_minus = clr_inverse_values(&eta_minus, grid);
    let gamma_plus = clr_inverse_values(&eta_plus, grid);

    let compose = |curve: &[f64], warp: &[f64]| -> Vec<f64> {
        warp.iter()
            .map(|&g| inverse_logit_scalar(grid.interp(curve, g)))
            .collect()
    };

    Ok(ModesOfVariation {
        component: k,
        eigenvalue: lambda,
        pve: system.pve[idx],
        overall_mean: compose(nu_mean, &gamma_mean),
        amplitude_minus: compose(&nu_minus, &gamma_mean),
        amplitude_plus: compose(&nu_plus, &gamma_mean),
        phase_minus: compose(nu_mean, &gamma_minus),
        phase_plus: compose(nu_mean, &gamma_plus),
        joint_minus: compose(&nu_minus, &gamma_minus),
        joint_plus: compose(&nu_plus, &gamma_plus),
    })
}

/// Mean curve of a matrix given as rows on a grid (helper for callers that
/// need the mean CLR warp).
pub fn mean_rows(values: &Array2<f64>) -> Vec<f64> {
    let n = values.nrows() as f64;
    (0..values.ncols())
        .map(|j| values.column(j).sum() / n)
        .collect()
}

#[allow(dead_code)]
fn as_array1(v: &[f64]) -> Array1<f64> {
    Array1::from_vec(v.to_vec())
}

#[allow(dead_code)]
fn as_dvector(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}
