//! Minimal deterministic SVG construction.
//!
//! Coordinates are written with fixed two-decimal precision and elements in
//! call order, so identical inputs produce identical bytes.

use std::fmt::Write as _;

/// Formats a pixel coordinate.
pub fn px(v: f64) -> String {
    format!("{v:.2}")
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// An SVG document under construction.
pub struct Svg {
    width: f64,
    height: f64,
    body: String,
}

impl Svg {
    pub fn new(width: f64, height: f64) -> Self {
        let mut svg = Svg {
            width,
            height,
            body: String::new(),
        };
        svg.rect(0.0, 0.0, width, height, "#ffffff", None);
        svg
    }

    pub fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str, stroke: Option<&str>) {
        let stroke = stroke
            .map(|s| format!(" stroke=\"{s}\" stroke-width=\"1\""))
            .unwrap_or_default();
        let _ = writeln!(
            self.body,
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{fill}\"{stroke}/>",
            px(x),
            px(y),
            px(w),
            px(h),
        );
    }

    #[allow(clippy::too_many_arguments)]
    pub fn line(
        &mut self,
        x1: f64,
        y1: f64,
        x2: f64,
        y2: f64,
        stroke: &str,
        width: f64,
        dash: Option<&str>,
    ) {
        let dash = dash
            .map(|d| format!(" stroke-dasharray=\"{d}\""))
            .unwrap_or_default();
        let _ = writeln!(
            self.body,
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{stroke}\" \
             stroke-width=\"{width}\"{dash}/>",
            px(x1),
            px(y1),
            px(x2),
            px(y2),
        );
    }

    /// A polyline with an optional `class` attribute; series that must be
    /// countable in the output carry `class="series"`.
    pub fn polyline(
        &mut self,
        points: &[(f64, f64)],
        stroke: &str,
        width: f64,
        dash: Option<&str>,
        class: Option<&str>,
    ) {
        let mut coords = String::with_capacity(points.len() * 12);
        for (x, y) in points {
            if !coords.is_empty() {
                coords.push(' ');
            }
            let _ = write!(coords, "{},{}", px(*x), px(*y));
        }
        let class = class
            .map(|c| format!(" class=\"{c}\""))
            .unwrap_or_default();
        let dash = dash
            .map(|d| format!(" stroke-dasharray=\"{d}\""))
            .unwrap_or_default();
        let _ = writeln!(
            self.body,
            "<polyline{class} points=\"{coords}\" fill=\"none\" stroke=\"{stroke}\" \
             stroke-width=\"{width}\"{dash}/>",
        );
    }

    pub fn text(&mut self, x: f64, y: f64, size: f64, anchor: &str, fill: &str, content: &str) {
        let _ = writeln!(
            self.body,
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"{size}\" \
             text-anchor=\"{anchor}\" fill=\"{fill}\">{}</text>",
            px(x),
            px(y),
            escape(content),
        );
    }

    pub fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" \
             viewBox=\"0 0 {} {}\">\n{}</svg>\n",
            px(self.width),
            px(self.height),
            px(self.width),
            px(self.height),
            self.body,
        )
    }
}

/// A rectangular data panel mapping data coordinates to pixels.
pub struct Panel {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Panel {
    pub fn px(&self, v: f64) -> f64 {
        self.x + (v - self.x_min) / (self.x_max - self.x_min) * self.w
    }

    pub fn py(&self, v: f64) -> f64 {
        self.y + self.h - (v - self.y_min) / (self.y_max - self.y_min) * self.h
    }

    /// Border, title, and corner tick labels for both axes.
    pub fn frame(&self, svg: &mut Svg, title: &str) {
        svg.rect(self.x, self.y, self.w, self.h, "none", Some("#444444"));
        svg.text(
            self.x + self.w / 2.0,
            self.y - 6.0,
            12.0,
            "middle",
            "#000000",
            title,
        );
        svg.text(
            self.x,
            self.y + self.h + 12.0,
            9.0,
            "middle",
            "#555555",
            &trim(self.x_min),
        );
        svg.text(
            self.x + self.w,
            self.y + self.h + 12.0,
            9.0,
            "middle",
            "#555555",
            &trim(self.x_max),
        );
        svg.text(
            self.x - 4.0,
            self.y + self.h,
            9.0,
            "end",
            "#555555",
            &trim(self.y_min),
        );
        svg.text(self.x - 4.0, self.y + 8.0, 9.0, "end", "#555555", &trim(self.y_max));
    }

    /// Draws one data series clipped to nothing (data is expected inside
    /// the ranges; the ranges are computed from the data).
    #[allow(clippy::too_many_arguments)]
    pub fn series(
        &self,
        svg: &mut Svg,
        xs: &[f64],
        ys: &[f64],
        stroke: &str,
        width: f64,
        dash: Option<&str>,
        class: Option<&str>,
    ) {
        let points: Vec<(f64, f64)> = xs
            .iter()
            .zip(ys)
            .map(|(&x, &y)| (self.px(x), self.py(y)))
            .collect();
        svg.polyline(&points, stroke, width, dash, class);
    }
}

/// Short axis-label formatting: up to three significant-ish decimals.
pub fn trim(v: f64) -> String {
    let text = format!("{v:.3}");
    let text = text.trim_end_matches('0').trim_end_matches('.');
    if text.is_empty() || text == "-" {
        "0".to_string()
    } else {
        text.to_string()
    }
}

/// Data range of a slice with proportional padding; degenerate ranges get a
/// unit of slack so panels never divide by zero.
pub fn padded_range(values: impl Iterator<Item = f64>, pad: f64) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if lo == hi {
        return (lo - 0.5, hi + 0.5);
    }
    let slack = (hi - lo) * pad;
    (lo - slack, hi + slack)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn document_is_deterministic_and_well_formed() {
        let build = || {
            let mut svg = Svg::new(100.0, 50.0);
            svg.polyline(
                &[(0.0, 0.0), (10.0, 25.5)],
                "#ff0000",
                1.0,
                Some("4 2"),
                Some("series"),
            );
            svg.text(5.0, 10.0, 10.0, "start", "#000", "a < b");
            svg.finish()
        };
        let doc = build();
        assert_eq!(doc, build());
        assert!(doc.starts_with("<svg"));
        assert!(doc.ends_with("</svg>\n"));
        assert!(doc.contains("class=\"series\""));
        assert!(doc.contains("a &lt; b"));
    }

    #[test]
    fn panel_maps_corners_to_pixels() {
        let panel = Panel {
            x: 10.0,
            y: 20.0,
            w: 100.0,
            h: 50.0,
            x_min: 0.0,
            x_max: 1.0,
            y_min: -1.0,
            y_max: 1.0,
        };
        assert_eq!(panel.px(0.0), 10.0);
        assert_eq!(panel.px(1.0), 110.0);
        assert_eq!(panel.py(1.0), 20.0);
        assert_eq!(panel.py(-1.0), 70.0);
    }

    #[test]
    fn ranges_pad_and_handle_degenerate_data() {
        assert_eq!(padded_range([2.0, 2.0].into_iter(), 0.1), (1.5, 2.5));
        let (lo, hi) = padded_range([0.0, 10.0].into_iter(), 0.05);
        assert_eq!((lo, hi), (-0.5, 10.5));
    }
}
