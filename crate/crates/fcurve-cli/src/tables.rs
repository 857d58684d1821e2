//! Delimited-text tables: the machine-readable ground truth for every
//! downstream artifact.
//!
//! Numbers are written with Rust's shortest round-trip float formatting and
//! parsed back with the exact inverse, so a value that passes through a
//! table is bit-identical on the other side. Plots and the standalone
//! `fpca`/`test` subcommands consume these files rather than in-memory
//! state, which is what makes reruns reproducible byte for byte.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use fcurve::fd::{CurveKind, FunctionalSample, Grid, Group};
use fcurve::fpca::{ModesOfVariation, WeightSelection};
use fcurve::inference::TestBattery;
use ndarray::Array2;

use crate::error::CliError;

/// Fixed writing order of the registration curve sets.
pub const CURVE_SETS: [&str; 4] = ["unaligned_logit", "aligned_logit", "warp", "warp_clr"];
/// Fixed writing order of the tested curve sets.
pub const TEST_SETS: [&str; 3] = ["unaligned_logit", "aligned_logit", "warp_clr"];

fn read_table(path: &Path, header: &str) -> Result<Vec<Vec<String>>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Run(format!("missing artifact {}: {e}", path.display())))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(first) if first == header => {}
        other => {
            return Err(CliError::Run(format!(
                "{}: expected header {header:?}, got {other:?}",
                path.display()
            )))
        }
    }
    let expected = header.split(',').count();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<String> = line.split(',').map(str::to_string).collect();
        if fields.len() != expected {
            return Err(CliError::Run(format!(
                "{} line {}: {} fields, expected {expected}",
                path.display(),
                i + 2,
                fields.len()
            )));
        }
        rows.push(fields);
    }
    Ok(rows)
}

fn parse_field<T: FromStr>(path: &Path, what: &str, text: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    text.parse().map_err(|e| {
        CliError::Run(format!(
            "{}: bad {what} value {text:?}: {e}",
            path.display()
        ))
    })
}

/// Curve tables: one row per (set, subject, grid point).
pub fn curves_csv(
    grid: &Grid,
    ids: &[String],
    labels: &[Group],
    sets: &[(&str, &Array2<f64>)],
) -> String {
    let mut out = String::from("set,subject_id,group,s,value\n");
    for (name, values) in sets {
        for i in 0..ids.len() {
            for (j, s) in grid.points().iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{name},{},{},{s},{}",
                    ids[i],
                    labels[i],
                    values[[i, j]]
                );
            }
        }
    }
    out
}

/// A parsed curve table: the shared grid, subjects in file order, and the
/// value matrix of every set present.
#[derive(Debug)]
pub struct CurveTable {
    pub grid: Grid,
    pub ids: Vec<String>,
    pub labels: Vec<Group>,
    pub sets: Vec<(String, Array2<f64>)>,
}

impl CurveTable {
    /// The named set as a [`FunctionalSample`] of the stated kind.
    pub fn sample(&self, set: &str, kind: CurveKind) -> Result<FunctionalSample, CliError> {
        let values = self
            .sets
            .iter()
            .find(|(name, _)| name == set)
            .map(|(_, values)| values.clone())
            .ok_or_else(|| CliError::Run(format!("curve table has no {set:?} set")))?;
        FunctionalSample::new(self.grid.clone(), values, self.labels.clone(), kind)
            .map_err(CliError::from)
    }

    pub fn set(&self, set: &str) -> Result<&Array2<f64>, CliError> {
        self.sets
            .iter()
            .find(|(name, _)| name == set)
            .map(|(_, values)| values)
            .ok_or_else(|| CliError::Run(format!("curve table has no {set:?} set")))
    }
}

pub fn read_curves(path: &Path) -> Result<CurveTable, CliError> {
    let rows = read_table(path, "set,subject_id,group,s,value")?;
    // Per subject: id, group, grid points, and values, in file order.
    type SubjectRows = (String, Group, Vec<f64>, Vec<f64>);
    let mut sets: Vec<(String, Vec<SubjectRows>)> = Vec::new();
    for row in &rows {
        let (set, id, group, s, value) = (&row[0], &row[1], &row[2], &row[3], &row[4]);
        let group: Group = parse_field(path, "group", group)?;
        let s: f64 = parse_field(path, "s", s)?;
        let value: f64 = parse_field(path, "value", value)?;
        let set_entry = match sets.iter_mut().find(|(name, _)| name == set) {
            Some(entry) => &mut entry.1,
            None => {
                sets.push((set.clone(), Vec::new()));
                &mut sets.last_mut().unwrap().1
            }
        };
        match set_entry.last_mut() {
            Some(subject) if &subject.0 == id => {
                subject.2.push(s);
                subject.3.push(value);
            }
            _ => set_entry.push((id.clone(), group, vec![s], vec![value])),
        }
    }
    if sets.is_empty() {
        return Err(CliError::Run(format!("{}: no curves", path.display())));
    }

    let first_subject = &sets[0].1.first();
    let points = match first_subject {
        Some(subject) => subject.2.clone(),
        None => return Err(CliError::Run(format!("{}: no curves", path.display()))),
    };
    let grid = Grid::from_points(points.clone())
        .map_err(|e| CliError::Run(format!("{}: {e}", path.display())))?;
    let ids: Vec<String> = sets[0].1.iter().map(|s| s.0.clone()).collect();
    let labels: Vec<Group> = sets[0].1.iter().map(|s| s.1).collect();

    let mut matrices = Vec::with_capacity(sets.len());
    for (name, subjects) in &sets {
        let set_ids: Vec<&String> = subjects.iter().map(|s| &s.0).collect();
        if set_ids.len() != ids.len() || set_ids.iter().zip(&ids).any(|(a, b)| *a != b) {
            return Err(CliError::Run(format!(
                "{}: set {name:?} lists different subjects than {:?}",
                path.display(),
                sets[0].0
            )));
        }
        let mut values = Array2::zeros((subjects.len(), points.len()));
        for (i, subject) in subjects.iter().enumerate() {
            if subject.2 != points {
                return Err(CliError::Run(format!(
                    "{}: subject {} in set {name:?} is on a different grid",
                    path.display(),
                    subject.0
                )));
            }
            for (j, v) in subject.3.iter().enumerate() {
                values[[i, j]] = *v;
            }
        }
        matrices.push((name.clone(), values));
    }
    Ok(CurveTable {
        grid,
        ids,
        labels,
        sets: matrices,
    })
}

/// Weight-selection tables: one row per candidate weight.
pub fn weight_csv(selection: &WeightSelection) -> String {
    let mut out = String::from("d,mise,selected\n");
    for candidate in &selection.table {
        let mise = candidate
            .mise
            .map(|m| m.to_string())
            .unwrap_or_default();
        let selected = u8::from(candidate.d == selection.selected);
        let _ = writeln!(out, "{},{mise},{selected}", candidate.d);
    }
    out
}

#[derive(Debug)]
pub struct WeightRow {
    pub d: f64,
    pub mise: Option<f64>,
    pub selected: bool,
}

pub fn read_weight(path: &Path) -> Result<Vec<WeightRow>, CliError> {
    let rows = read_table(path, "d,mise,selected")?;
    rows.iter()
        .map(|row| {
            let mise = if row[1].is_empty() {
                None
            } else {
                Some(parse_field(path, "mise", &row[1])?)
            };
            Ok(WeightRow {
                d: parse_field(path, "d", &row[0])?,
                mise,
                selected: &row[2] == "1",
            })
        })
        .collect()
}

/// Modes-of-variation tables: one row per (component, grid point).
pub fn modes_csv(grid: &Grid, modes: &[ModesOfVariation]) -> String {
    let mut out = String::from(
        "component,eigenvalue,pve,s,overall_mean,amplitude_minus,amplitude_plus,\
         phase_minus,phase_plus,joint_minus,joint_plus\n",
    );
    for mode in modes {
        for (j, s) in grid.points().iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{s},{},{},{},{},{},{},{}",
                mode.component,
                mode.eigenvalue,
                mode.pve,
                mode.overall_mean[j],
                mode.amplitude_minus[j],
                mode.amplitude_plus[j],
                mode.phase_minus[j],
                mode.phase_plus[j],
                mode.joint_minus[j],
                mode.joint_plus[j],
            );
        }
    }
    out
}

/// One component's rows from a modes table, in file order.
#[derive(Debug)]
pub struct ModeTable {
    pub component: usize,
    pub pve: f64,
    pub s: Vec<f64>,
    pub overall_mean: Vec<f64>,
    pub amplitude_minus: Vec<f64>,
    pub amplitude_plus: Vec<f64>,
    pub phase_minus: Vec<f64>,
    pub phase_plus: Vec<f64>,
    pub joint_minus: Vec<f64>,
    pub joint_plus: Vec<f64>,
}

pub fn read_modes(path: &Path) -> Result<Vec<ModeTable>, CliError> {
    let rows = read_table(
        path,
        "component,eigenvalue,pve,s,overall_mean,amplitude_minus,amplitude_plus,\
         phase_minus,phase_plus,joint_minus,joint_plus",
    )?;
    let mut modes: Vec<ModeTable> = Vec::new();
    for row in &rows {
        let component: usize = parse_field(path, "component", &row[0])?;
        if modes.last().map(|m| m.component) != Some(component) {
            modes.push(ModeTable {
                component,
                pve: parse_field(path, "pve", &row[2])?,
                s: Vec::new(),
                overall_mean: Vec::new(),
                amplitude_minus: Vec::new(),
                amplitude_plus: Vec::new(),
                phase_minus: Vec::new(),
                phase_plus: Vec::new(),
                joint_minus: Vec::new(),
                joint_plus: Vec::new(),
            });
        }
        let mode = modes.last_mut().unwrap();
        mode.s.push(parse_field(path, "s", &row[3])?);
        mode.overall_mean.push(parse_field(path, "mean", &row[4])?);
        mode.amplitude_minus
            .push(parse_field(path, "amplitude_minus", &row[5])?);
        mode.amplitude_plus
            .push(parse_field(path, "amplitude_plus", &row[6])?);
        mode.phase_minus
            .push(parse_field(path, "phase_minus", &row[7])?);
        mode.phase_plus
            .push(parse_field(path, "phase_plus", &row[8])?);
        mode.joint_minus
            .push(parse_field(path, "joint_minus", &row[9])?);
        mode.joint_plus
            .push(parse_field(path, "joint_plus", &row[10])?);
    }
    Ok(modes)
}

/// Global-test tables: one row per curve set.
pub fn tests_csv(battery: &TestBattery) -> String {
    let mut out = String::from("set,t_observed,p_value\n");
    for (name, tests) in battery_sets(battery) {
        let _ = writeln!(
            out,
            "{name},{},{}",
            tests.global.t_observed, tests.global.p_value
        );
    }
    out
}

pub fn read_tests(path: &Path) -> Result<Vec<(String, f64, f64)>, CliError> {
    let rows = read_table(path, "set,t_observed,p_value")?;
    rows.iter()
        .map(|row| {
            Ok((
                row[0].clone(),
                parse_field(path, "t_observed", &row[1])?,
                parse_field(path, "p_value", &row[2])?,
            ))
        })
        .collect()
}

/// Permutation-statistic tables: one row per (set, permutation).
pub fn permutations_csv(battery: &TestBattery) -> String {
    let mut out = String::from("set,index,t_value\n");
    for (name, tests) in battery_sets(battery) {
        for (index, t) in tests.global.t_permuted.iter().enumerate() {
            let _ = writeln!(out, "{name},{index},{t}");
        }
    }
    out
}

pub fn read_permutations(path: &Path) -> Result<Vec<(String, Vec<f64>)>, CliError> {
    let rows = read_table(path, "set,index,t_value")?;
    let mut sets: Vec<(String, Vec<f64>)> = Vec::new();
    for row in &rows {
        let t: f64 = parse_field(path, "t_value", &row[2])?;
        match sets.last_mut() {
            Some((name, values)) if name == &row[0] => values.push(t),
            _ => sets.push((row[0].clone(), vec![t])),
        }
    }
    Ok(sets)
}

/// P-value function tables: one row per (set, grid point).
pub fn pvalues_csv(battery: &TestBattery) -> String {
    let mut out = String::from("set,s,unadjusted,adjusted,significant\n");
    for (name, tests) in battery_sets(battery) {
        let pv = &tests.pvalues;
        for (j, s) in pv.grid().points().iter().enumerate() {
            let _ = writeln!(
                out,
                "{name},{s},{},{},{}",
                pv.unadjusted()[j],
                pv.adjusted()[j],
                u8::from(pv.significant_mask()[j]),
            );
        }
    }
    out
}

/// One curve set's p-value rows, in file order.
#[derive(Debug)]
pub struct PValueTable {
    pub set: String,
    pub s: Vec<f64>,
    pub unadjusted: Vec<f64>,
    pub adjusted: Vec<f64>,
    pub significant: Vec<bool>,
}

pub fn read_pvalues(path: &Path) -> Result<Vec<PValueTable>, CliError> {
    let rows = read_table(path, "set,s,unadjusted,adjusted,significant")?;
    let mut sets: Vec<PValueTable> = Vec::new();
    for row in &rows {
        if sets.last().map(|t| &t.set) != Some(&row[0]) {
            sets.push(PValueTable {
                set: row[0].clone(),
                s: Vec::new(),
                unadjusted: Vec::new(),
                adjusted: Vec::new(),
                significant: Vec::new(),
            });
        }
        let table = sets.last_mut().unwrap();
        table.s.push(parse_field(path, "s", &row[1])?);
        table
            .unadjusted
            .push(parse_field(path, "unadjusted", &row[2])?);
        table
            .adjusted
            .push(parse_field(path, "adjusted", &row[3])?);
        table.significant.push(&row[4] == "1");
    }
    Ok(sets)
}

fn battery_sets(battery: &TestBattery) -> [(&'static str, &fcurve::inference::CurveSetTests); 3] {
    [
        (TEST_SETS[0], &battery.unaligned),
        (TEST_SETS[1], &battery.aligned),
        (TEST_SETS[2], &battery.warps),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use fcurve::fd::CurveKind;

    #[test]
    fn curve_table_round_trips_bitwise() {
        let grid = Grid::uniform(7).unwrap();
        let ids = vec!["a".to_string(), "b".to_string()];
        let labels = vec![Group::L, Group::C];
        let values = Array2::from_shape_fn((2, 7), |(i, j)| {
            (i as f64 + 1.0) / 3.0 + (j as f64) * 0.123456789012345
        });
        let csv = curves_csv(&grid, &ids, &labels, &[("aligned_logit", &values)]);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("curves_d0.csv");
        std::fs::write(&path, &csv).unwrap();
        let table = read_curves(&path).unwrap();
        assert_eq!(table.ids, ids);
        assert_eq!(table.labels, labels);
        assert_eq!(table.grid.points(), grid.points());
        let sample = table.sample("aligned_logit", CurveKind::AlignedLogit).unwrap();
        assert_eq!(sample.values(), &values, "values are bit-identical");

        let rewritten = curves_csv(
            &table.grid,
            &table.ids,
            &table.labels,
            &[("aligned_logit", table.set("aligned_logit").unwrap())],
        );
        assert_eq!(rewritten, csv, "write-read-write is a fixed point");
    }

    #[test]
    fn missing_curve_file_is_named() {
        let err = read_curves(Path::new("nowhere/curves_d8.csv")).unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("curves_d8.csv"),
            "error should name the file: {msg}"
        );
    }

    #[test]
    fn weight_table_round_trips_selection_marker() {
        use fcurve::fpca::WeightCandidate;
        let selection = WeightSelection {
            selected: 0.2,
            table: vec![
                WeightCandidate {
                    d: 0.1,
                    mise: Some(0.5),
                },
                WeightCandidate { d: 0.2, mise: None },
            ],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("weight_d0.csv");
        std::fs::write(&path, weight_csv(&selection)).unwrap();
        let rows = read_weight(&path).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].mise, Some(0.5));
        assert!(!rows[0].selected);
        assert_eq!(rows[1].mise, None);
        assert!(rows[1].selected);
    }

    #[test]
    fn header_mismatch_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tests_d0.csv");
        std::fs::write(&path, "wrong,header\n").unwrap();
        let err = read_tests(&path).unwrap_err();
        assert!(err.to_string().contains("expected header"));
    }
}
