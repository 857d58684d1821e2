//! Core data model: repeated binary-trial series, uniform grids on [0, 1],
//! and grid-sampled curve collections, plus the delimited-text trial format.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance for grid-uniformity and domain-coverage checks.
const GRID_REL_TOL: f64 = 1e-12;

/// Experimental group tag carried by every subject.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Group {
    /// Lesion group.
    L,
    /// Control group.
    C,
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Group::L => write!(f, "L"),
            Group::C => write!(f, "C"),
        }
    }
}

impl FromStr for Group {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "L" => Ok(Group::L),
            "C" => Ok(Group::C),
            other => Err(Error::Parse(format!("unknown group tag {other:?}"))),
        }
    }
}

/// Delay condition in seconds; 0 denotes the acquisition phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Delay {
    D0,
    D2,
    D4,
    D8,
    D16,
}

impl Delay {
    /// All delays in ascending order.
    pub const ALL: [Delay; 5] = [Delay::D0, Delay::D2, Delay::D4, Delay::D8, Delay::D16];

    /// Delay length in seconds (0 = acquisition).
    pub fn seconds(self) -> u8 {
        match self {
            Delay::D0 => 0,
            Delay::D2 => 2,
            Delay::D4 => 4,
            Delay::D8 => 8,
            Delay::D16 => 16,
        }
    }

    pub fn from_seconds(s: u8) -> Result<Self> {
        match s {
            0 => Ok(Delay::D0),
            2 => Ok(Delay::D2),
            4 => Ok(Delay::D4),
            8 => Ok(Delay::D8),
            16 => Ok(Delay::D16),
            other => Err(Error::Parse(format!("unknown delay {other}"))),
        }
    }
}

impl fmt::Display for Delay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.seconds())
    }
}

impl FromStr for Delay {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let secs: u8 = s
            .parse()
            .map_err(|_| Error::Parse(format!("unparseable delay {s:?}")))?;
        Delay::from_seconds(secs)
    }
}

/// One subject's outcome sequence for a single delay condition.
///
/// Times are normalized to the trial-index coordinate: strictly increasing
/// in [0, 1] with the first trial at 0 and the last at 1.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSeries {
    pub subject_id: String,
    pub group: Group,
    pub delay: Delay,
    times: Vec<f64>,
    outcomes: Vec<u8>,
}

impl TrialSeries {
    /// Builds a series from already-normalized times, validating invariants.
    pub fn new(
        subject_id: impl Into<String>,
        group: Group,
        delay: Delay,
        times: Vec<f64>,
        outcomes: Vec<u8>,
    ) -> Result<Self> {
        let subject_id = subject_id.into();
        if times.len() < 2 {
            return Err(Error::InvalidSeries(format!(
                "subject {subject_id}: needs at least 2 trials, got {}",
                times.len()
            )));
        }
        if times.len() != outcomes.len() {
            return Err(Error::InvalidSeries(format!(
                "subject {subject_id}: {} times vs {} outcomes",
                times.len(),
                outcomes.len()
            )));
        }
        if times[0] != 0.0 || *times.last().unwrap() != 1.0 {
            return Err(Error::InvalidSeries(format!(
                "subject {subject_id}: times must start at 0 and end at 1"
            )));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidSeries(format!(
                "subject {subject_id}: times must be strictly increasing"
            )));
        }
        if outcomes.iter().any(|&y| y > 1) {
            return Err(Error::InvalidSeries(format!(
                "subject {subject_id}: outcomes must be 0 or 1"
            )));
        }
        Ok(Self {
            subject_id,
            group,
            delay,
            times,
            outcomes,
        })
    }

    /// Builds a series from raw clock or index values via [`normalize_times`].
    pub fn from_raw_times(
        subject_id: impl Into<String>,
        group: Group,
        delay: Delay,
        raw_times: &[f64],
        outcomes: Vec<u8>,
    ) -> Result<Self> {
        let times = normalize_times(raw_times)?;
        Self::new(subject_id, group, delay, times, outcomes)
    }

    pub fn subject_id(&self) -> &str {
        &self.subject_id
    }

    pub fn group(&self) -> Group {
        self.group
    }

    pub fn delay(&self) -> Delay {
        self.delay
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn outcomes(&self) -> &[u8] {
        &self.outcomes
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Uniform grid on [0, 1] with at least two points.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    points: Vec<f64>,
}

impl Grid {
    /// Uniform grid of `n` points from 0 to 1 inclusive.
    pub fn uniform(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::DomainMismatch(format!(
                "grid needs at least 2 points, got {n}"
            )));
        }
        let denom = (n - 1) as f64;
        let points = (0..n).map(|j| j as f64 / denom).collect();
        Ok(Self { points })
    }

    /// Validates an explicit point vector as a uniform [0, 1] grid.
    pub fn from_points(points: Vec<f64>) -> Result<Self> {
        let n = points.len();
        if n < 2 {
            return Err(Error::DomainMismatch(format!(
                "grid needs at least 2 points, got {n}"
            )));
        }
        if points[0] != 0.0 || (points[n - 1] - 1.0).abs() > GRID_REL_TOL {
            return Err(Error::DomainMismatch(
                "grid must span [0, 1] exactly".into(),
            ));
        }
        let h = 1.0 / (n - 1) as f64;
        for w in points.windows(2) {
            let step = w[1] - w[0];
            if (step - h).abs() > GRID_REL_TOL * h.max(1.0) {
                return Err(Error::DomainMismatch(
                    "grid spacing is not uniform within 1e-12".into(),
                ));
            }
        }
        Ok(Self { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Grid spacing 1 / (n - 1).
    pub fn spacing(&self) -> f64 {
        1.0 / (self.points.len() - 1) as f64
    }

    /// Trapezoidal quadrature weights: h/2 at the endpoints, h inside.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let n = self.points.len();
        let h = self.spacing();
        let mut w = vec![h; n];
        w[0] = 0.5 * h;
        w[n - 1] = 0.5 * h;
        w
    }

    /// Trapezoidal integral of `values` sampled on this grid.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.points.len());
        let h = self.spacing();
        let mut acc = 0.0;
        for w in values.windows(2) {
            acc += 0.5 * h * (w[0] + w[1]);
        }
        acc
    }

    /// Cumulative trapezoidal integral; entry `j` approximates the integral
    /// from 0 to the j-th grid point.
    pub fn cumulative_integral(&self, values: &[f64]) -> Vec<f64> {
        debug_assert_eq!(values.len(), self.points.len());
        let h = self.spacing();
        let mut out = Vec::with_capacity(values.len());
        let mut acc = 0.0;
        out.push(0.0);
        for w in values.windows(2) {
            acc += 0.5 * h * (w[0] + w[1]);
            out.push(acc);
        }
        out
    }

    /// Linear interpolation of grid-sampled `values` at `x` in [0, 1].
    /// `x` outside the domain is clamped to the endpoints.
    pub fn interp(&self, values: &[f64], x: f64) -> f64 {
        debug_assert_eq!(values.len(), self.points.len());
        let n = self.points.len();
        if x <= 0.0 {
            return values[0];
        }
        if x >= 1.0 {
            return values[n - 1];
        }
        let pos = x * (n - 1) as f64;
        let j = (pos.floor() as usize).min(n - 2);
        let t = pos - j as f64;
        values[j] + t * (values[j + 1] - values[j])
    }
}

/// What the rows of a [`FunctionalSample`] represent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CurveKind {
    /// Logit-scale curves in observed (unregistered) time.
    UnalignedLogit,
    /// Logit-scale curves in registered time.
    AlignedLogit,
    /// Centered log-ratio transforms of warp derivatives.
    WarpClr,
    /// Probability-scale curves, strictly inside (0, 1).
    Probability,
}

impl fmt::Display for CurveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CurveKind::UnalignedLogit => "unaligned_logit",
            CurveKind::AlignedLogit => "aligned_logit",
            CurveKind::WarpClr => "warp_clr",
            CurveKind::Probability => "probability",
        };
        write!(f, "{s}")
    }
}

/// A labelled collection of curves sampled on a shared grid (rows = subjects).
#[derive(Debug, Clone)]
pub struct FunctionalSample {
    grid: Grid,
    values: Array2<f64>,
    labels: Vec<Group>,
    kind: CurveKind,
}

impl FunctionalSample {
    /// Validates dimensions, finiteness, and the kind-specific constraints:
    /// probability curves must lie in (0, 1) and CLR curves must have
    /// trapezoidal integral 0 within 1e-8.
    pub fn new(grid: Grid, values: Array2<f64>, labels: Vec<Group>, kind: CurveKind) -> Result<Self> {
        let (n, m) = values.dim();
        if n == 0 {
            return Err(Error::EmptySample("sample has no curves".into()));
        }
        if m != grid.len() {
            return Err(Error::DomainMismatch(format!(
                "curves have {m} points but the grid has {}",
                grid.len()
            )));
        }
        if labels.len() != n {
            return Err(Error::GroupError(format!(
                "{} labels for {n} curves",
                labels.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::DomainMismatch("curve values must be finite".into()));
        }
        match kind {
            CurveKind::Probability => {
                if values.iter().any(|&v| v <= 0.0 || v >= 1.0) {
                    return Err(Error::DomainMismatch(
                        "probability curves must lie strictly inside (0, 1)".into(),
                    ));
                }
            }
            CurveKind::WarpClr => {
                for (i, row) in values.rows().into_iter().enumerate() {
                    let integral = grid.integrate(row.as_slice().unwrap());
                    if integral.abs() > 1e-8 {
                        return Err(Error::DomainMismatch(format!(
                            "CLR curve {i} integrates to {integral:.3e}, expected 0"
                        )));
                    }
                }
            }
            _ => {}
        }
        Ok(Self {
            grid,
            values,
            labels,
            kind,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn labels(&self) -> &[Group] {
        &self.labels
    }

    pub fn kind(&self) -> CurveKind {
        self.kind
    }

    /// Number of curves.
    pub fn n_curves(&self) -> usize {
        self.values.nrows()
    }

    /// Number of grid points.
    pub fn n_points(&self) -> usize {
        self.values.ncols()
    }

    /// Row indices belonging to `group`.
    pub fn group_indices(&self, group: Group) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, g)| **g == group)
            .map(|(i, _)| i)
            .collect()
    }

    /// Pointwise mean curve over all subjects.
    pub fn mean_curve(&self) -> Vec<f64> {
        let n = self.n_curves() as f64;
        (0..self.n_points())
            .map(|j| self.values.column(j).sum() / n)
            .collect()
    }

    /// Pointwise cross-sectional variance (denominator n - 1), integrated
    /// over the domain by trapezoidal quadrature.
    pub fn integrated_variance(&self) -> f64 {
        let n = self.n_curves();
        if n < 2 {
            return 0.0;
        }
        let mean = self.mean_curve();
        let var: Vec<f64> = (0..self.n_points())
            .map(|j| {
                self.values
                    .column(j)
                    .iter()
                    .map(|v| (v - mean[j]).powi(2))
                    .sum::<f64>()
                    / (n - 1) as f64
            })
            .collect();
        self.grid.integrate(&var)
    }
}

/// Affinely rescales raw times onto [0, 1].
///
/// Requires at least two values, strictly increasing.
pub fn normalize_times(raw: &[f64]) -> Result<Vec<f64>> {
    if raw.len() < 2 {
        return Err(Error::InvalidSeries(format!(
            "need at least 2 time points, got {}",
            raw.len()
        )));
    }
    if raw.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidSeries("times must be finite".into()));
    }
    if raw.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidSeries(
            "times must be strictly increasing".into(),
        ));
    }
    let t0 = raw[0];
    let span = raw[raw.len() - 1] - t0;
    let mut out: Vec<f64> = raw.iter().map(|t| (t - t0) / span).collect();
    // Pin the endpoints exactly; interior points are already in (0, 1).
    out[0] = 0.0;
    let last = out.len() - 1;
    out[last] = 1.0;
    Ok(out)
}

/// Smallest series length among all series at `delay`; this is the common
/// grid size used for that delay condition.
pub fn common_grid_size(collection: &[TrialSeries], delay: Delay) -> Result<usize> {
    collection
        .iter()
        .filter(|s| s.delay == delay)
        .map(|s| s.len())
        .min()
        .ok_or_else(|| Error::EmptySample(format!("no series at delay {delay}")))
}

/// Piecewise-linear interpolation of `(xs, ys)` onto a uniform target grid.
///
/// The source abscissae must be strictly increasing and span [0, 1]; output
/// values are exact where abscissae coincide and bounded by the source range.
pub fn interpolate_to_grid(xs: &[f64], ys: &[f64], target: &Grid) -> Result<Vec<f64>> {
    if xs.len() != ys.len() {
        return Err(Error::DomainMismatch(format!(
            "{} abscissae vs {} ordinates",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(Error::DomainMismatch(
            "need at least 2 source points".into(),
        ));
    }
    if xs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::DomainMismatch(
            "source abscissae must be strictly increasing".into(),
        ));
    }
    if xs[0] > GRID_REL_TOL || xs[xs.len() - 1] < 1.0 - GRID_REL_TOL {
        return Err(Error::DomainMismatch(format!(
            "source abscissae [{:.6}, {:.6}] must span [0, 1]",
            xs[0],
            xs[xs.len() - 1]
        )));
    }
    let out = target
        .points()
        .iter()
        .map(|&x| interp_linear(xs, ys, x))
        .collect();
    Ok(out)
}

/// Linear interpolation on strictly increasing abscissae; clamps outside.
pub fn interp_linear(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    // partition_point returns the first index with xs[idx] > x, so the
    // bracketing interval is [idx - 1, idx].
    let idx = xs.partition_point(|&t| t <= x);
    let (j, k) = (idx - 1, idx);
    if xs[j] == x {
        return ys[j];
    }
    let t = (x - xs[j]) / (xs[k] - xs[j]);
    ys[j] + t * (ys[k] - ys[j])
}

/// One row of the delimited-text trial format.
#[derive(Debug, Serialize, Deserialize)]
struct TrialRow {
    subject_id: String,
    group: String,
    delay: u8,
    trial_index: i64,
    outcome: u8,
}

/// Reads the trial format (header `subject_id,group,delay,trial_index,outcome`)
/// and assembles one normalized [`TrialSeries`] per (subject, delay) pair.
///
/// Rows may arrive in any order; they are sorted by trial index per series.
/// Gaps in trial indices carry through to the normalized spacing.
pub fn read_trials<R: Read>(reader: R) -> Result<Vec<TrialSeries>> {
    // Per (subject, delay): the group tag and the (index, outcome) rows.
    type SeriesRows = std::collections::HashMap<(String, Delay), (Group, Vec<(i64, u8)>)>;
    let mut csv_reader = csv::Reader::from_reader(reader);
    // Keys in first-seen order, so output order follows the file.
    let mut order: Vec<(String, Delay)> = Vec::new();
    let mut by_key: SeriesRows = std::collections::HashMap::new();
    for record in csv_reader.deserialize() {
        let row: TrialRow = record.map_err(|e| Error::Parse(e.to_string()))?;
        let group: Group = row.group.parse()?;
        let delay = Delay::from_seconds(row.delay)?;
        if row.outcome > 1 {
            return Err(Error::InvalidSeries(format!(
                "subject {}: outcome {} is not binary",
                row.subject_id, row.outcome
            )));
        }
        let key = (row.subject_id.clone(), delay);
        let entry = by_key.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            (group, Vec::new())
        });
        if entry.0 != group {
            return Err(Error::InvalidSeries(format!(
                "subject {} has inconsistent group tags",
                row.subject_id
            )));
        }
        entry.1.push((row.trial_index, row.outcome));
    }
    if order.is_empty() {
        return Err(Error::EmptySample("trial file contains no rows".into()));
    }
    let mut out = Vec::with_capacity(order.len());
    for key in order {
        let (group, mut rows) = by_key.remove(&key).unwrap();
        rows.sort_by_key(|r| r.0);
        if rows.windows(2).any(|w| w[1].0 == w[0].0) {
            return Err(Error::InvalidSeries(format!(
                "subject {}: duplicate trial index",
                key.0
            )));
        }
        let raw_times: Vec<f64> = rows.iter().map(|r| r.0 as f64).collect();
        let outcomes: Vec<u8> = rows.iter().map(|r| r.1).collect();
        out.push(TrialSeries::from_raw_times(
            key.0, group, key.1, &raw_times, outcomes,
        )?);
    }
    Ok(out)
}

/// Writes series in the same delimited-text format that [`read_trials`]
/// ingests, using sequential trial indices.
pub fn write_trials<W: Write>(writer: W, series: &[TrialSeries]) -> Result<()> {
    let mut csv_writer = csv::Writer::from_writer(writer);
    for s in series {
        for (j, &y) in s.outcomes().iter().enumerate() {
            csv_writer
                .serialize(TrialRow {
                    subject_id: s.subject_id.clone(),
                    group: s.group.to_string(),
                    delay: s.delay.seconds(),
                    trial_index: j as i64,
                    outcome: y,
                })
                .map_err(|e| Error::Parse(e.to_string()))?;
        }
    }
    csv_writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn normalize_times_affine_example() {
        let out = normalize_times(&[5.0, 6.0, 8.0, 13.0]).unwrap();
        assert_eq!(out, vec![0.0, 0.125, 0.375, 1.0]);
    }

    #[test]
    fn normalize_times_rejects_short_and_nonincreasing() {
        assert!(matches!(
            normalize_times(&[1.0]),
            Err(Error::InvalidSeries(_))
        ));
        assert!(matches!(
            normalize_times(&[0.0, 2.0, 2.0]),
            Err(Error::InvalidSeries(_))
        ));
        assert!(matches!(
            normalize_times(&[0.0, 3.0, 1.0]),
            Err(Error::InvalidSeries(_))
        ));
    }

    #[test]
    fn common_grid_size_takes_min_per_delay() {
        let mk = |id: &str, delay: Delay, n: usize| {
            let times: Vec<f64> = (0..n).map(|j| j as f64 / (n - 1) as f64).collect();
            TrialSeries::from_raw_times(id, Group::L, delay, &times, vec![0; n]).unwrap()
        };
        let all = vec![
            mk("a", Delay::D0, 120),
            mk("b", Delay::D0, 100),
            mk("c", Delay::D2, 30),
        ];
        assert_eq!(common_grid_size(&all, Delay::D0).unwrap(), 100);
        assert_eq!(common_grid_size(&all, Delay::D2).unwrap(), 30);
        assert!(matches!(
            common_grid_size(&all, Delay::D4),
            Err(Error::EmptySample(_))
        ));
    }

    #[test]
    fn interpolation_tent_example() {
        let grid = Grid::uniform(5).unwrap();
        let out = interpolate_to_grid(&[0.0, 0.5, 1.0], &[0.0, 1.0, 0.0], &grid).unwrap();
        assert_abs_diff_eq!(out[1], 0.5, epsilon = 1e-15);
        assert_eq!(out[0], 0.0);
        assert_eq!(out[2], 1.0);
        assert_eq!(out[4], 0.0);
    }

    #[test]
    fn interpolation_requires_full_span() {
        let grid = Grid::uniform(4).unwrap();
        let err = interpolate_to_grid(&[0.1, 0.6, 1.0], &[1.0, 2.0, 3.0], &grid);
        assert!(matches!(err, Err(Error::DomainMismatch(_))));
    }

    #[test]
    fn grid_rejects_nonuniform_points() {
        assert!(Grid::from_points(vec![0.0, 0.4, 1.0]).is_err());
        assert!(Grid::from_points(vec![0.0, 0.5, 1.0]).is_ok());
        assert!(Grid::uniform(1).is_err());
    }

    #[test]
    fn trapezoid_matches_closed_forms() {
        let grid = Grid::uniform(2001).unwrap();
        let squares: Vec<f64> = grid.points().iter().map(|s| s * s).collect();
        assert_abs_diff_eq!(grid.integrate(&squares), 1.0 / 3.0, epsilon = 1e-7);
        let cumulative = grid.cumulative_integral(&squares);
        assert_abs_diff_eq!(cumulative[1000], 0.5f64.powi(3) / 3.0, epsilon = 1e-7);
        assert_eq!(cumulative[0], 0.0);
    }

    #[test]
    fn probability_sample_rejects_boundary_values() {
        let grid = Grid::uniform(3).unwrap();
        let bad = array![[0.2, 1.0, 0.4]];
        let err = FunctionalSample::new(grid.clone(), bad, vec![Group::L], CurveKind::Probability);
        assert!(matches!(err, Err(Error::DomainMismatch(_))));
        let ok = array![[0.2, 0.9, 0.4]];
        assert!(FunctionalSample::new(grid, ok, vec![Group::L], CurveKind::Probability).is_ok());
    }

    #[test]
    fn clr_sample_requires_zero_integral() {
        let grid = Grid::uniform(3).unwrap();
        let bad = array![[1.0, 1.0, 1.0]];
        let err = FunctionalSample::new(grid.clone(), bad, vec![Group::C], CurveKind::WarpClr);
        assert!(matches!(err, Err(Error::DomainMismatch(_))));
        // 0.25*(-1) + 0.5*1 + 0.25*(-1) = 0 under trapezoid weights.
        let ok = array![[-1.0, 1.0, -1.0]];
        assert!(FunctionalSample::new(grid, ok, vec![Group::C], CurveKind::WarpClr).is_ok());
    }

    #[test]
    fn trial_csv_round_trip_preserves_series() {
        let times: Vec<f64> = (0..6).map(|j| j as f64 / 5.0).collect();
        let series = vec![
            TrialSeries::from_raw_times("s1", Group::L, Delay::D0, &times, vec![0, 1, 1, 0, 1, 1])
                .unwrap(),
            TrialSeries::from_raw_times("s2", Group::C, Delay::D2, &times, vec![1, 0, 0, 0, 1, 0])
                .unwrap(),
        ];
        let mut buffer = Vec::new();
        write_trials(&mut buffer, &series).unwrap();
        let text = String::from_utf8(buffer.clone()).unwrap();
        assert!(text.starts_with("subject_id,group,delay,trial_index,outcome"));
        let back = read_trials(buffer.as_slice()).unwrap();
        assert_eq!(back, series);
    }

    #[test]
    fn trial_csv_keeps_index_gaps_in_spacing() {
        let csv_text = "subject_id,group,delay,trial_index,outcome\n\
                        s1,L,0,0,1\n\
                        s1,L,0,1,0\n\
                        s1,L,0,4,1\n";
        let series = read_trials(csv_text.as_bytes()).unwrap();
        assert_eq!(series[0].times(), &[0.0, 0.25, 1.0]);
    }

    #[test]
    fn trial_csv_rejects_duplicate_indices() {
        let csv_text = "subject_id,group,delay,trial_index,outcome\n\
                        s1,L,0,3,1\n\
                        s1,L,0,3,0\n";
        assert!(matches!(
            read_trials(csv_text.as_bytes()),
            Err(Error::InvalidSeries(_))
        ));
    }

    proptest! {
        #[test]
        fn normalize_times_is_idempotent(raw in proptest::collection::vec(0.0f64..1e6, 2..40)) {
            let mut sorted = raw;
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            sorted.dedup();
            prop_assume!(sorted.len() >= 2);
            let once = normalize_times(&sorted).unwrap();
            let twice = normalize_times(&once).unwrap();
            for (a, b) in once.iter().zip(&twice) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
            prop_assert_eq!(once[0], 0.0);
            prop_assert_eq!(*once.last().unwrap(), 1.0);
        }

        #[test]
        fn interpolation_is_exact_at_source_points_and_bounded(
            ys in proptest::collection::vec(-10.0f64..10.0, 5),
        ) {
            let xs = [0.0, 0.3, 0.5, 0.8, 1.0];
            let grid = Grid::uniform(11).unwrap();
            let out = interpolate_to_grid(&xs, &ys, &grid).unwrap();
            let (lo, hi) = ys.iter().fold((f64::MAX, f64::MIN), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
            for v in &out {
                prop_assert!(*v >= lo - 1e-12 && *v <= hi + 1e-12);
            }
            // Grid points 0.0, 0.3, 0.5, 0.8, 1.0 coincide with sources.
            prop_assert!((out[0] - ys[0]).abs() <= 1e-12);
            prop_assert!((out[3] - ys[1]).abs() <= 1e-12);
            prop_assert!((out[5] - ys[2]).abs() <= 1e-12);
            prop_assert!((out[8] - ys[3]).abs() <= 1e-12);
            prop_assert!((out[10] - ys[4]).abs() <= 1e-12);
        }
    }
}
