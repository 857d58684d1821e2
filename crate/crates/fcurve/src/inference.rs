//! Group-difference inference: global permutation tests on mean curves and
//! interval-wise tests producing family-wise adjusted p-value functions.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fd::{FunctionalSample, Grid, Group};

/// Cap on the number of labelings an exhaustive plan may enumerate.
const EXHAUSTIVE_CAP: u128 = 200_000;

/// A precomputed table of group reassignments shared across tests, so that
/// several statistics can be compared under one common null sample.
#[derive(Debug, Clone)]
pub struct PermutationPlan {
    rows: Vec<Vec<Group>>,
    n_l: usize,
    n_c: usize,
    exhaustive: bool,
}

fn group_counts(labels: &[Group]) -> (usize, usize) {
    let n_l = labels.iter().filter(|g| **g == Group::L).count();
    (n_l, labels.len() - n_l)
}

fn require_two_groups(labels: &[Group]) -> Result<(usize, usize)> {
    let (n_l, n_c) = group_counts(labels);
    if n_l == 0 || n_c == 0 {
        return Err(Error::GroupError(format!(
            "both groups must be nonempty, got {n_l} L and {n_c} C"
        )));
    }
    Ok((n_l, n_c))
}

impl PermutationPlan {
    /// Draws `b` random reassignments of the observed labels from a seeded
    /// generator. The table is fixed before any statistic is computed.
    pub fn new(labels: &[Group], b: usize, seed: u64) -> Result<Self> {
        let (n_l, n_c) = require_two_groups(labels)?;
        if b == 0 {
            return Err(Error::InvalidConfig(
                "a permutation plan needs at least one permutation".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::with_capacity(b);
        for _ in 0..b {
            let mut row = labels.to_vec();
            row.shuffle(&mut rng);
            rows.push(row);
        }
        Ok(PermutationPlan {
            rows,
            n_l,
            n_c,
            exhaustive: false,
        })
    }

    /// Enumerates every assignment of `n_L` subjects to group L, in
    /// lexicographic order of the chosen index sets.
    pub fn exhaustive(labels: &[Group]) -> Result<Self> {
        let (n_l, n_c) = require_two_groups(labels)?;
        let n = labels.len();
        let total = binomial(n as u128, n_l as u128);
        if total > EXHAUSTIVE_CAP {
            return Err(Error::InvalidConfig(format!(
                "exhaustive enumeration would produce {total} labelings (cap {EXHAUSTIVE_CAP})"
            )));
        }
        let mut rows = Vec::with_capacity(total as usize);
        let mut chosen: Vec<usize> = (0..n_l).collect();
        'outer: loop {
            let mut row = vec![Group::C; n];
            for &i in &chosen {
                row[i] = Group::L;
            }
            rows.push(row);
            // Advance to the next combination: bump the rightmost index that
            // has room, resetting everything after it.
            for pos in (0..n_l).rev() {
                if chosen[pos] < pos + n - n_l {
                    chosen[pos] += 1;
                    for later in pos + 1..n_l {
                        chosen[later] = chosen[later - 1] + 1;
                    }
                    continue 'outer;
                }
            }
            break;
        }
        Ok(PermutationPlan {
            rows,
            n_l,
            n_c,
            exhaustive: true,
        })
    }

    /// Builds a plan from explicit label rows (mainly for tests).
    pub fn from_rows(rows: Vec<Vec<Group>>) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::InvalidConfig("a plan needs at least one row".into()))?;
        let n = first.len();
        let (n_l, n_c) = require_two_groups(first)?;
        for row in &rows {
            if row.len() != n {
                return Err(Error::InvalidConfig(
                    "every plan row must have the same length".into(),
                ));
            }
            require_two_groups(row)?;
        }
        Ok(PermutationPlan {
            rows,
            n_l,
            n_c,
            exhaustive: false,
        })
    }

    pub fn n_permutations(&self) -> usize {
        self.rows.len()
    }
    pub fn n_subjects(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }
    pub fn rows(&self) -> &[Vec<Group>] {
        &self.rows
    }
    pub fn is_exhaustive(&self) -> bool {
        self.exhaustive
    }
    pub fn group_sizes(&self) -> (usize, usize) {
        (self.n_l, self.n_c)
    }
}

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k);
    let mut result: u128 = 1;
    for i in 0..k {
        result = result.saturating_mul(n - i) / (i + 1);
    }
    result
}

/// Outcome of a global permutation test.
#[derive(Debug, Clone)]
pub struct GlobalTestResult {
    /// Integrated squared difference of the observed group means.
    pub t_observed: f64,
    /// The same statistic under each planned reassignment.
    pub t_permuted: Vec<f64>,
    /// Share of permuted statistics at or above the observed one.
    pub p_value: f64,
}

/// Pointwise and interval-adjusted p-value functions at a fixed level.
#[derive(Debug, Clone)]
pub struct PValueFunction {
    pub(crate) grid: Grid,
    pub(crate) unadjusted: Vec<f64>,
    pub(crate) adjusted: Vec<f64>,
    pub(crate) alpha: f64,
    pub(crate) significant_mask: Vec<bool>,
}

impl PValueFunction {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn unadjusted(&self) -> &[f64] {
        &self.unadjusted
    }
    pub fn adjusted(&self) -> &[f64] {
        &self.adjusted
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn significant_mask(&self) -> &[bool] {
        &self.significant_mask
    }
}

/// Per-index contributions `w_j * (mean_L - mean_C)_j^2` and their
/// left-to-right total. Every statistic in this module reduces to sums of
/// these terms in index order, which is what makes the full-domain interval
/// statistic bitwise equal to the global one.
fn squared_difference_terms(
    values: &Array2<f64>,
    labels: &[Group],
    weights: &[f64],
) -> (Vec<f64>, f64) {
    let (n, n_points) = values.dim();
    debug_assert_eq!(labels.len(), n);
    let mut sum_l = vec![0.0; n_points];
    let mut sum_c = vec![0.0; n_points];
    let mut n_l = 0usize;
    for (i, label) in labels.iter().enumerate() {
        let target = match label {
            Group::L => {
                n_l += 1;
                &mut sum_l
            }
            Group::C => &mut sum_c,
        };
        for (j, t) in target.iter_mut().enumerate() {
            *t += values[[i, j]];
        }
    }
    let n_c = n - n_l;
    let mut terms = Vec::with_capacity(n_points);
    let mut total = 0.0;
    for j in 0..n_points {
        let diff = sum_l[j] / n_l as f64 - sum_c[j] / n_c as f64;
        let term = weights[j] * diff * diff;
        terms.push(term);
        total += term;
    }
    (terms, total)
}

fn check_plan_matches(sample: &FunctionalSample, plan: &PermutationPlan) -> Result<()> {
    if plan.n_subjects() != sample.n_curves() {
        return Err(Error::GroupError(format!(
            "plan covers {} subjects but the sample has {}",
            plan.n_subjects(),
            sample.n_curves()
        )));
    }
    require_two_groups(sample.labels())?;
    Ok(())
}

/// Global two-group permutation test with statistic
/// `T = integral (mean_L - mean_C)^2` under trapezoidal quadrature. The
/// p-value is the exact share of permuted statistics at or above the
/// observed one, so `p * B` is an integer.
pub fn global_permutation_test(
    sample: &FunctionalSample,
    plan: &PermutationPlan,
) -> Result<GlobalTestResult> {
    check_plan_matches(sample, plan)?;
    let weights = sample.grid().trapezoid_weights();
    let (_, t_observed) = squared_difference_terms(sample.values(), sample.labels(), &weights);
    let t_permuted: Vec<f64> = plan
        .rows()
        .par_iter()
        .map(|row| squared_difference_terms(sample.values(), row, &weights).1)
        .collect();
    let count = t_permuted.iter().filter(|t| **t >= t_observed).count();
    let p_value = count as f64 / plan.n_permutations() as f64;
    Ok(GlobalTestResult {
        t_observed,
        t_permuted,
        p_value,
    })
}

fn prefix_sums(terms: &[f64]) -> Vec<f64> {
    let mut prefix = Vec::with_capacity(terms.len() + 1);
    let mut acc = 0.0;
    prefix.push(0.0);
    for t in terms {
        acc += t;
        prefix.push(acc);
    }
    prefix
}

/// p-value of the permutation test restricted to the inclusive grid-index
/// interval `[lo, hi]`, under the shared plan.
pub fn interval_p_value(
    sample: &FunctionalSample,
    plan: &PermutationPlan,
    lo: usize,
    hi: usize,
) -> Result<f64> {
    check_plan_matches(sample, plan)?;
    let n_points = sample.n_points();
    if lo > hi || hi >= n_points {
        return Err(Error::InvalidConfig(format!(
            "interval [{lo}, {hi}] outside the 0..{n_points} grid"
        )));
    }
    let weights = sample.grid().trapezoid_weights();
    let (terms, _) = squared_difference_terms(sample.values(), sample.labels(), &weights);
    let observed = prefix_sums(&terms);
    let t_observed = observed[hi + 1] - observed[lo];
    let count: usize = plan
        .rows()
        .par_iter()
        .map(|row| {
            let (terms, _) = squared_difference_terms(sample.values(), row, &weights);
            let prefix = prefix_sums(&terms);
            usize::from(prefix[hi + 1] - prefix[lo] >= t_observed)
        })
        .sum();
    Ok(count as f64 / plan.n_permutations() as f64)
}

/// Interval-wise two-group test.
///
/// Each curve is represented by its coefficient sequence on the grid (the
/// interpolating-spline coefficients of degree `spline_degree` are in
/// bijection with the grid values, so intervals are contiguous grid-index
/// ranges). Every interval gets a permutation test of its quadrature-
/// weighted integrated squared mean difference under the one shared label
/// table; the unadjusted p-value at an index is its single-index interval's
/// p, and the adjusted value is the maximum over all intervals containing
/// the index. Runs in O(B * N^2 + n * B * N) time and O(N^2) memory.
pub fn interval_wise_test(
    sample: &FunctionalSample,
    plan: &PermutationPlan,
    spline_degree: usize,
    alpha: f64,
) -> Result<PValueFunction> {
    check_plan_matches(sample, plan)?;
    let n_points = sample.n_points();
    if n_points < 4 {
        return Err(Error::InvalidConfig(format!(
            "interval-wise testing needs at least 4 grid points, got {n_points}"
        )));
    }
    if !(1..=5).contains(&spline_degree) {
        return Err(Error::InvalidConfig(format!(
            "spline degree must lie in 1..=5, got {spline_degree}"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "level must lie strictly between 0 and 1, got {alpha}"
        )));
    }
    let b = plan.n_permutations();
    let weights = sample.grid().trapezoid_weights();
    let (terms, _) = squared_difference_terms(sample.values(), sample.labels(), &weights);
    let observed = prefix_sums(&terms);

    // Prefix sums of the per-index statistic for every permutation.
    let permuted: Vec<Vec<f64>> = plan
        .rows()
        .par_iter()
        .map(|row| {
            let (terms, _) = squared_difference_terms(sample.values(), row, &weights);
            prefix_sums(&terms)
        })
        .collect();

    // counts[lo * N + hi] = number of permutations whose interval statistic
    // reaches the observed one on [lo, hi]. Rows are independent, so they
    // fill in parallel; integer counts keep the result order-independent.
    let mut counts = vec![0u32; n_points * n_points];
    counts
        .par_chunks_mut(n_points)
        .enumerate()
        .for_each(|(lo, row)| {
            let obs_lo = observed[lo];
            for prefix in &permuted {
                let perm_lo = prefix[lo];
                for (hi, slot) in row.iter_mut().enumerate().skip(lo) {
                    let t_perm = prefix[hi + 1] - perm_lo;
                    let t_obs = observed[hi + 1] - obs_lo;
                    if t_perm >= t_obs {
                        *slot += 1;
                    }
                }
            }
        });

    let unadjusted: Vec<f64> = (0..n_points)
        .map(|j| counts[j * n_points + j] as f64 / b as f64)
        .collect();

    // Adjusted counts: max over intervals containing each index, folded one
    // row at a time through that row's suffix maxima.
    let mut adjusted_counts = vec![0u32; n_points];
    let mut suffix = vec![0u32; n_points];
    for lo in 0..n_points {
        let row = &counts[lo * n_points..(lo + 1) * n_points];
        let mut running = 0u32;
        for hi in (lo..n_points).rev() {
            running = running.max(row[hi]);
            suffix[hi] = running;
        }
        for j in lo..n_points {
            adjusted_counts[j] = adjusted_counts[j].max(suffix[j]);
        }
    }
    let adjusted: Vec<f64> = adjusted_counts
        .iter()
        .map(|&c| c as f64 / b as f64)
        .collect();
    let significant_mask: Vec<bool> = adjusted.iter().map(|&p| p <= alpha).collect();
    Ok(PValueFunction {
        grid: sample.grid().clone(),
        unadjusted,
        adjusted,
        alpha,
        significant_mask,
    })
}

/// Global and interval-wise results for one curve set.
#[derive(Debug, Clone)]
pub struct CurveSetTests {
    pub global: GlobalTestResult,
    pub pvalues: PValueFunction,
}

/// Both tests applied to the three registration curve sets under one shared
/// label table.
#[derive(Debug, Clone)]
pub struct TestBattery {
    pub unaligned: CurveSetTests,
    pub aligned: CurveSetTests,
    pub warps: CurveSetTests,
}

/// Runs the global and interval-wise tests on the unaligned logit curves,
/// the aligned logit curves, and the CLR-transformed warps, reusing one
/// permutation plan across the three sets for comparability.
pub fn run_test_battery(
    unaligned_logit: &FunctionalSample,
    aligned_logit: &FunctionalSample,
    warp_clr: &FunctionalSample,
    plan: &PermutationPlan,
    alpha: f64,
) -> Result<TestBattery> {
    let run = |sample: &FunctionalSample| -> Result<CurveSetTests> {
        Ok(CurveSetTests {
            global: global_permutation_test(sample, plan)?,
            pvalues: interval_wise_test(sample, plan, 3, alpha)?,
        })
    };
    Ok(TestBattery {
        unaligned: run(unaligned_logit)?,
        aligned: run(aligned_logit)?,
        warps: run(warp_clr)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fd::CurveKind;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn sample_with_labels(rows: Vec<Vec<f64>>, labels: Vec<Group>) -> FunctionalSample {
        let n = rows.len();
        let n_points = rows[0].len();
        let grid = Grid::uniform(n_points).unwrap();
        let mut values = Array2::zeros((n, n_points));
        for (i, row) in rows.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                values[[i, j]] = *v;
            }
        }
        FunctionalSample::new(grid, values, labels, CurveKind::AlignedLogit).unwrap()
    }

    fn gaussian_rows(
        n: usize,
        n_points: usize,
        mean_shift: f64,
        sd: f64,
        rng: &mut ChaCha8Rng,
    ) -> Vec<Vec<f64>> {
        let normal = Normal::new(0.0, sd).unwrap();
        (0..n)
            .map(|_| {
                (0..n_points)
                    .map(|_| mean_shift + normal.sample(rng))
                    .collect()
            })
            .collect()
    }

    #[test]
    fn identical_constant_groups_give_p_one() {
        let rows = vec![vec![0.7; 12]; 6];
        let labels = vec![Group::L, Group::L, Group::L, Group::C, Group::C, Group::C];
        let sample = sample_with_labels(rows, labels.clone());
        let plan = PermutationPlan::new(&labels, 200, 7).unwrap();
        let result = global_permutation_test(&sample, &plan).unwrap();
        assert_eq!(result.t_observed, 0.0);
        assert!(result.t_permuted.iter().all(|&t| t == 0.0));
        assert_eq!(result.p_value, 1.0);

        let iwt = interval_wise_test(&sample, &plan, 3, 0.05).unwrap();
        assert!(iwt.adjusted().iter().all(|&p| p == 1.0));
        assert!(iwt.significant_mask().iter().all(|&m| !m));
    }

    #[test]
    fn exhaustive_plan_matches_hand_enumeration() {
        // n_L = n_C = 2: six partitions, enumerated independently here.
        let labels = vec![Group::L, Group::L, Group::C, Group::C];
        let rows = vec![
            vec![1.0, 1.2, 0.8],
            vec![0.9, 1.1, 1.0],
            vec![0.2, 0.3, 0.1],
            vec![0.4, 0.2, 0.3],
        ];
        let sample = sample_with_labels(rows.clone(), labels.clone());
        let plan = PermutationPlan::exhaustive(&labels).unwrap();
        assert_eq!(plan.n_permutations(), 6);
        let result = global_permutation_test(&sample, &plan).unwrap();

        // Oracle: trapezoid statistic per labeling, written from scratch.
        let stat = |l_idx: [usize; 2]| -> f64 {
            let c_idx: Vec<usize> = (0..4).filter(|i| !l_idx.contains(i)).collect();
            let w = [0.25, 0.5, 0.25];
            let mut total = 0.0;
            for j in 0..3 {
                let ml = (rows[l_idx[0]][j] + rows[l_idx[1]][j]) / 2.0;
                let mc = (rows[c_idx[0]][j] + rows[c_idx[1]][j]) / 2.0;
                total += w[j] * (ml - mc) * (ml - mc);
            }
            total
        };
        let partitions = [[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]];
        let t_obs = stat([0, 1]);
        let exceed = partitions.iter().filter(|p| stat(**p) >= t_obs).count();
        assert_abs_diff_eq!(result.t_observed, t_obs, epsilon = 1e-12);
        assert_eq!(result.p_value, exceed as f64 / 6.0);
    }

    #[test]
    fn separated_means_are_detected_with_high_power() {
        // Means two pooled standard deviations apart, n = 16 + 17.
        let n_points = 25;
        let mut rejections = 0;
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1_000 + seed);
            let mut rows = gaussian_rows(16, n_points, 2.0, 1.0, &mut rng);
            rows.extend(gaussian_rows(17, n_points, 0.0, 1.0, &mut rng));
            let labels: Vec<Group> = (0..33)
                .map(|i| if i < 16 { Group::L } else { Group::C })
                .collect();
            let sample = sample_with_labels(rows, labels.clone());
            let plan = PermutationPlan::new(&labels, 1000, seed).unwrap();
            let result = global_permutation_test(&sample, &plan).unwrap();
            if result.p_value <= 0.01 {
                rejections += 1;
            }
        }
        assert!(rejections >= 95, "only {rejections}/100 runs rejected");
    }

    #[test]
    fn full_domain_interval_matches_global_test_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let mut rows = gaussian_rows(7, 15, 0.4, 1.0, &mut rng);
        rows.extend(gaussian_rows(8, 15, 0.0, 1.0, &mut rng));
        let labels: Vec<Group> = (0..15)
            .map(|i| if i < 7 { Group::L } else { Group::C })
            .collect();
        let sample = sample_with_labels(rows, labels.clone());
        let plan = PermutationPlan::new(&labels, 500, 5).unwrap();
        let global = global_permutation_test(&sample, &plan).unwrap();
        let full = interval_p_value(&sample, &plan, 0, 14).unwrap();
        assert_eq!(global.p_value, full);

        // Single-index intervals agree with the unadjusted function.
        let iwt = interval_wise_test(&sample, &plan, 3, 0.05).unwrap();
        for j in [0usize, 3, 7, 14] {
            let single = interval_p_value(&sample, &plan, j, j).unwrap();
            assert_eq!(iwt.unadjusted()[j], single);
        }
    }

    #[test]
    fn relabeling_the_input_preserves_the_null_distribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let mut rows = gaussian_rows(5, 10, 0.8, 1.0, &mut rng);
        rows.extend(gaussian_rows(6, 10, 0.0, 1.0, &mut rng));
        let labels: Vec<Group> = (0..11)
            .map(|i| if i < 5 { Group::L } else { Group::C })
            .collect();
        let mut shuffled = labels.clone();
        shuffled.rotate_left(3);

        let plan = PermutationPlan::new(&labels, 300, 9).unwrap();
        let original = sample_with_labels(rows.clone(), labels);
        let relabeled = sample_with_labels(rows, shuffled);
        let r1 = global_permutation_test(&original, &plan).unwrap();
        let r2 = global_permutation_test(&relabeled, &plan).unwrap();
        // The permuted statistics depend only on the plan and the curves.
        assert_eq!(r1.t_permuted, r2.t_permuted);
        assert_ne!(r1.t_observed, r2.t_observed);
        let count = r1.t_permuted.iter().filter(|t| **t >= r2.t_observed).count();
        assert_eq!(r2.p_value, count as f64 / 300.0);
    }

    #[test]
    fn adjusted_p_dominates_every_containing_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let mut rows = gaussian_rows(6, 20, 0.5, 1.0, &mut rng);
        rows.extend(gaussian_rows(6, 20, 0.0, 1.0, &mut rng));
        let labels: Vec<Group> = (0..12)
            .map(|i| if i < 6 { Group::L } else { Group::C })
            .collect();
        let sample = sample_with_labels(rows, labels.clone());
        let plan = PermutationPlan::new(&labels, 200, 2).unwrap();
        let iwt = interval_wise_test(&sample, &plan, 3, 0.05).unwrap();
        for (j, (&u, &a)) in iwt.unadjusted().iter().zip(iwt.adjusted()).enumerate() {
            assert!(a >= u, "adjusted < unadjusted at index {j}");
        }
        // 100 random (index, containing interval) pairs.
        let mut pick = ChaCha8Rng::seed_from_u64(56);
        for _ in 0..100 {
            let j = pick.gen_range(0..20);
            let lo = pick.gen_range(0..=j);
            let hi = pick.gen_range(j..20);
            let p_interval = interval_p_value(&sample, &plan, lo, hi).unwrap();
            assert!(
                iwt.adjusted()[j] >= p_interval,
                "adjusted[{j}] below interval [{lo}, {hi}]"
            );
        }
    }

    #[test]
    fn plan_construction_and_validation() {
        let labels = vec![Group::L, Group::C, Group::L, Group::C, Group::C];
        let plan = PermutationPlan::new(&labels, 50, 123).unwrap();
        assert_eq!(plan.n_permutations(), 50);
        assert_eq!(plan.group_sizes(), (2, 3));
        for row in plan.rows() {
            let (n_l, n_c) = group_counts(row);
            assert_eq!((n_l, n_c), (2, 3));
        }
        // Seed determinism.
        let again = PermutationPlan::new(&labels, 50, 123).unwrap();
        assert_eq!(plan.rows(), again.rows());
        let other = PermutationPlan::new(&labels, 50, 124).unwrap();
        assert_ne!(plan.rows(), other.rows());

        assert!(matches!(
            PermutationPlan::new(&[Group::L, Group::L], 10, 0),
            Err(Error::GroupError(_))
        ));
        assert!(matches!(
            PermutationPlan::new(&labels, 0, 0),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            PermutationPlan::from_rows(vec![vec![Group::L, Group::C], vec![Group::L]]),
            Err(Error::InvalidConfig(_))
        ));

        let exhaustive = PermutationPlan::exhaustive(&labels).unwrap();
        assert_eq!(exhaustive.n_permutations(), 10); // C(5, 2)
        assert!(exhaustive.is_exhaustive());
        let unique: std::collections::HashSet<&Vec<Group>> = exhaustive.rows().iter().collect();
        assert_eq!(unique.len(), 10);
    }

    #[test]
    fn battery_reuses_one_plan_across_curve_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(66);
        let labels: Vec<Group> = (0..10)
            .map(|i| if i < 5 { Group::L } else { Group::C })
            .collect();
        let grid = Grid::uniform(16).unwrap();
        let make = |rng: &mut ChaCha8Rng, kind: CurveKind| {
            let rows: Vec<Vec<f64>> = (0..10)
                .map(|_| {
                    let base: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    match kind {
                        CurveKind::WarpClr => {
                            let mean = grid.integrate(&base);
                            base.iter().map(|v| v - mean).collect()
                        }
                        _ => base,
                    }
                })
                .collect();
            let mut values = Array2::zeros((10, 16));
            for (i, row) in rows.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    values[[i, j]] = *v;
                }
            }
            FunctionalSample::new(grid.clone(), values, labels.clone(), kind).unwrap()
        };
        let unaligned = make(&mut rng, CurveKind::UnalignedLogit);
        let aligned = make(&mut rng, CurveKind::AlignedLogit);
        let warps = make(&mut rng, CurveKind::WarpClr);
        let plan = PermutationPlan::new(&labels, 100, 3).unwrap();
        let battery = run_test_battery(&unaligned, &aligned, &warps, &plan, 0.05).unwrap();
        for set in [&battery.unaligned, &battery.aligned, &battery.warps] {
            assert_eq!(set.global.t_permuted.len(), 100);
            let scaled = set.global.p_value * 100.0;
            assert_abs_diff_eq!(scaled, scaled.round(), epsilon = 1e-9);
            assert_eq!(set.pvalues.alpha(), 0.05);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn p_values_are_exact_proportions(seed in 0u64..1000, n_l in 2usize..5, n_c in 2usize..5) {
            let n = n_l + n_c;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..8).map(|_| rng.gen_range(-2.0..2.0)).collect())
                .collect();
            let labels: Vec<Group> = (0..n)
                .map(|i| if i < n_l { Group::L } else { Group::C })
                .collect();
            let sample = sample_with_labels(rows, labels.clone());
            let plan = PermutationPlan::new(&labels, 64, seed).unwrap();
            let result = global_permutation_test(&sample, &plan).unwrap();
            prop_assert!(result.p_value >= 0.0 && result.p_value <= 1.0);
            let scaled = result.p_value * 64.0;
            prop_assert!((scaled - scaled.round()).abs() < 1e-9);

            let iwt = interval_wise_test(&sample, &plan, 3, 0.05).unwrap();
            for (u, a) in iwt.unadjusted().iter().zip(iwt.adjusted()) {
                prop_assert!(a >= u);
                prop_assert!(*u >= 0.0 && *a <= 1.0);
            }
        }
    }
}
