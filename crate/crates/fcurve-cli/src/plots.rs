//! Plot rendering.
//!
//! Every plot is derived from the delimited tables alone — nothing is drawn
//! that cannot be found in a machine-readable artifact — and rendering is
//! deterministic, so reruns produce identical bytes. A missing table fails
//! with an error naming the absent file.

use std::path::Path;

use fcurve::fd::{Delay, Group};

use crate::artifacts::{stage_path, write_atomic, ArtifactEntry};
use crate::error::CliError;
use crate::svg::{padded_range, trim, Panel, Svg};
use crate::tables::{
    read_curves, read_modes, read_permutations, read_pvalues, read_tests, ModeTable, CURVE_SETS,
    TEST_SETS,
};

const GROUP_L_COLOR: &str = "#c0392b";
const GROUP_C_COLOR: &str = "#2471a3";
const MEAN_COLOR: &str = "#000000";
const PLUS_COLOR: &str = "#c0392b";
const MINUS_COLOR: &str = "#2471a3";
const SET_COLORS: [&str; 3] = ["#7d3c98", "#c0392b", "#1e8449"];
const ALPHA_LINE: f64 = 0.05;

fn group_color(group: Group) -> &'static str {
    match group {
        Group::L => GROUP_L_COLOR,
        Group::C => GROUP_C_COLOR,
    }
}

/// Renders the four plots of one stage from its tables; returns the
/// artifact entries of the written files.
pub fn render_stage_plots(dir: &Path, delay: Delay) -> Result<Vec<ArtifactEntry>, CliError> {
    let sample = sample_plot(dir, delay)?;
    let modes = modes_plot(dir, delay)?;
    let pvalues = pvalue_plot(dir, delay)?;
    let histograms = histogram_plot(dir, delay)?;
    Ok(vec![sample, modes, pvalues, histograms])
}

/// Four-panel per-subject overview: unaligned logit, aligned logit, warps,
/// and CLR warps, color-coded by group.
fn sample_plot(dir: &Path, delay: Delay) -> Result<ArtifactEntry, CliError> {
    let table = read_curves(&stage_path(dir, "curves", delay, "csv"))?;
    let titles = [
        "unaligned logit curves",
        "aligned logit curves",
        "warps",
        "warp CLR transforms",
    ];

    let mut svg = Svg::new(920.0, 700.0);
    svg.text(
        460.0,
        20.0,
        14.0,
        "middle",
        "#000000",
        &format!("registered sample, delay {}s", delay.seconds()),
    );
    for (p, (set, title)) in CURVE_SETS.iter().zip(titles).enumerate() {
        let values = table.set(set)?;
        let (y_min, y_max) = padded_range(values.iter().copied(), 0.05);
        let panel = Panel {
            x: 60.0 + (p % 2) as f64 * 450.0,
            y: 60.0 + (p / 2) as f64 * 320.0,
            w: 380.0,
            h: 250.0,
            x_min: 0.0,
            x_max: 1.0,
            y_min,
            y_max,
        };
        panel.frame(&mut svg, title);
        if *set == "warp" {
            // Identity reference for the warp panel.
            let lo = y_min.max(0.0);
            let hi = y_max.min(1.0);
            svg.line(
                panel.px(lo),
                panel.py(lo),
                panel.px(hi),
                panel.py(hi),
                "#aaaaaa",
                1.0,
                Some("3 3"),
            );
        }
        for (i, row) in values.outer_iter().enumerate() {
            let ys: Vec<f64> = row.to_vec();
            panel.series(
                &mut svg,
                table.grid.points(),
                &ys,
                group_color(table.labels[i]),
                1.0,
                None,
                None,
            );
        }
    }
    legend(&mut svg, 60.0, 685.0, &[("L", GROUP_L_COLOR), ("C", GROUP_C_COLOR)]);

    let path = stage_path(dir, "sample", delay, "svg");
    write_atomic(&path, svg.finish().as_bytes())?;
    Ok(ArtifactEntry::new("sample_plot", &path))
}

/// Modes-of-variation grid: rows joint/phase/amplitude, one column per
/// component, each annotated with the component's PVE.
fn modes_plot(dir: &Path, delay: Delay) -> Result<ArtifactEntry, CliError> {
    let modes = read_modes(&stage_path(dir, "modes", delay, "csv"))?;
    let columns = modes.len().max(1);
    let width = 80.0 + 440.0 * columns as f64;
    let mut svg = Svg::new(width, 1000.0);
    svg.text(
        width / 2.0,
        20.0,
        14.0,
        "middle",
        "#000000",
        &format!("modes of variation, delay {}s", delay.seconds()),
    );

    type ModePair = fn(&ModeTable) -> (&[f64], &[f64]);
    let rows: [(&str, ModePair); 3] = [
        ("joint", |m| (&m.joint_minus, &m.joint_plus)),
        ("phase", |m| (&m.phase_minus, &m.phase_plus)),
        ("amplitude", |m| (&m.amplitude_minus, &m.amplitude_plus)),
    ];
    for (c, mode) in modes.iter().enumerate() {
        let pve_label = format!("PVE {:.1}%", mode.pve * 100.0);
        for (r, (name, extract)) in rows.iter().enumerate() {
            let (minus, plus) = extract(mode);
            let all = mode
                .overall_mean
                .iter()
                .chain(minus)
                .chain(plus)
                .copied();
            let (y_min, y_max) = padded_range(all, 0.05);
            let panel = Panel {
                x: 60.0 + c as f64 * 440.0,
                y: 60.0 + r as f64 * 310.0,
                w: 380.0,
                h: 240.0,
                x_min: 0.0,
                x_max: 1.0,
                y_min,
                y_max,
            };
            panel.frame(
                &mut svg,
                &format!("component {} {name} ({pve_label})", mode.component),
            );
            panel.series(&mut svg, &mode.s, minus, MINUS_COLOR, 1.2, Some("5 3"), None);
            panel.series(&mut svg, &mode.s, plus, PLUS_COLOR, 1.2, None, None);
            panel.series(&mut svg, &mode.s, &mode.overall_mean, MEAN_COLOR, 1.5, None, None);
        }
    }
    legend(
        &mut svg,
        60.0,
        985.0,
        &[
            ("mean", MEAN_COLOR),
            ("+2 sd", PLUS_COLOR),
            ("-2 sd (dashed)", MINUS_COLOR),
        ],
    );

    let path = stage_path(dir, "modes", delay, "svg");
    write_atomic(&path, svg.finish().as_bytes())?;
    Ok(ArtifactEntry::new("modes_plot", &path))
}

/// P-value functions of the three curve sets: adjusted solid, unadjusted
/// dashed, six countable series plus the level line.
fn pvalue_plot(dir: &Path, delay: Delay) -> Result<ArtifactEntry, CliError> {
    let sets = read_pvalues(&stage_path(dir, "pvalues", delay, "csv"))?;
    let mut svg = Svg::new(760.0, 520.0);
    svg.text(
        380.0,
        20.0,
        14.0,
        "middle",
        "#000000",
        &format!("interval-wise p-values, delay {}s", delay.seconds()),
    );
    let panel = Panel {
        x: 70.0,
        y: 50.0,
        w: 620.0,
        h: 380.0,
        x_min: 0.0,
        x_max: 1.0,
        y_min: 0.0,
        y_max: 1.0,
    };
    panel.frame(&mut svg, "");
    let y_alpha = panel.py(ALPHA_LINE);
    svg.line(panel.px(0.0), y_alpha, panel.px(1.0), y_alpha, "#777777", 1.0, Some("2 2"));
    svg.text(
        panel.px(1.0) + 6.0,
        y_alpha + 3.0,
        9.0,
        "start",
        "#777777",
        &trim(ALPHA_LINE),
    );

    let mut legend_entries = Vec::new();
    for (i, set_name) in TEST_SETS.iter().enumerate() {
        let table = sets
            .iter()
            .find(|t| t.set == *set_name)
            .ok_or_else(|| CliError::Run(format!("p-value table has no {set_name:?} set")))?;
        let color = SET_COLORS[i];
        panel.series(
            &mut svg,
            &table.s,
            &table.adjusted,
            color,
            1.6,
            None,
            Some("series"),
        );
        panel.series(
            &mut svg,
            &table.s,
            &table.unadjusted,
            color,
            1.0,
            Some("5 3"),
            Some("series"),
        );
        legend_entries.push((*set_name, color));
    }
    legend(&mut svg, 70.0, 480.0, &legend_entries);
    svg.text(
        70.0,
        500.0,
        10.0,
        "start",
        "#555555",
        "solid: interval-adjusted, dashed: pointwise",
    );

    let path = stage_path(dir, "pvalues", delay, "svg");
    write_atomic(&path, svg.finish().as_bytes())?;
    Ok(ArtifactEntry::new("pvalue_plot", &path))
}

/// Permutation-statistic histograms, one panel per curve set, with the
/// observed statistic marked at its abscissa and printed verbatim from the
/// test table.
fn histogram_plot(dir: &Path, delay: Delay) -> Result<ArtifactEntry, CliError> {
    let permutations = read_permutations(&stage_path(dir, "permutations", delay, "csv"))?;
    let tests = read_tests(&stage_path(dir, "tests", delay, "csv"))?;

    let mut svg = Svg::new(1160.0, 420.0);
    svg.text(
        580.0,
        20.0,
        14.0,
        "middle",
        "#000000",
        &format!("permutation statistics, delay {}s", delay.seconds()),
    );
    for (i, set_name) in TEST_SETS.iter().enumerate() {
        let t_values = permutations
            .iter()
            .find(|(name, _)| name == set_name)
            .map(|(_, v)| v)
            .ok_or_else(|| {
                CliError::Run(format!("permutation table has no {set_name:?} set"))
            })?;
        let (_, t_observed, p_value) = tests
            .iter()
            .find(|(name, _, _)| name == set_name)
            .ok_or_else(|| CliError::Run(format!("test table has no {set_name:?} set")))?;

        let (x_min, x_max) = padded_range(
            t_values.iter().copied().chain([*t_observed]),
            0.05,
        );
        let bins = 30usize;
        let mut counts = vec![0usize; bins];
        let span = x_max - x_min;
        for t in t_values {
            let b = (((t - x_min) / span) * bins as f64) as usize;
            counts[b.min(bins - 1)] += 1;
        }
        let y_max = counts.iter().copied().max().unwrap_or(1).max(1) as f64;

        let panel = Panel {
            x: 60.0 + i as f64 * 370.0,
            y: 60.0,
            w: 310.0,
            h: 280.0,
            x_min,
            x_max,
            y_min: 0.0,
            y_max: y_max * 1.05,
        };
        panel.frame(&mut svg, &format!("{set_name} (p = {p_value})"));
        let bin_width = span / bins as f64;
        for (b, count) in counts.iter().enumerate() {
            if *count == 0 {
                continue;
            }
            let x0 = panel.px(x_min + b as f64 * bin_width);
            let x1 = panel.px(x_min + (b + 1) as f64 * bin_width);
            let y0 = panel.py(*count as f64);
            svg.rect(
                x0,
                y0,
                x1 - x0,
                panel.py(0.0) - y0,
                "#b0c4de",
                Some("#666666"),
            );
        }
        let x_obs = panel.px(*t_observed);
        svg.line(x_obs, panel.y, x_obs, panel.y + panel.h, "#c0392b", 1.8, None);
        svg.text(
            x_obs,
            panel.y + panel.h + 26.0,
            10.0,
            "middle",
            "#c0392b",
            &format!("T = {t_observed}"),
        );
    }

    let path = stage_path(dir, "histograms", delay, "svg");
    write_atomic(&path, svg.finish().as_bytes())?;
    Ok(ArtifactEntry::new("histogram_plot", &path))
}

fn legend(svg: &mut Svg, x: f64, y: f64, entries: &[(&str, &str)]) {
    let mut offset = 0.0;
    for (label, color) in entries {
        svg.line(x + offset, y - 4.0, x + offset + 18.0, y - 4.0, color, 2.0, None);
        svg.text(x + offset + 24.0, y, 10.0, "start", "#000000", label);
        offset += 24.0 + 8.0 * label.len() as f64 + 20.0;
    }
}
