//! Self-contained SVG charts: the coverage curve and the score histogram.
//!
//! Hand-rolled SVG keeps the artifact free of plotting dependencies; these
//! are diagnostic files, not publication figures. Both charts embed their
//! data as plain polylines/rects, reference no external assets, and are
//! deterministic functions of their inputs.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::harness::CoverageCurve;

const CHART_WIDTH: f64 = 640.0;
const CHART_HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 32.0;
const MARGIN_BOTTOM: f64 = 56.0;

const COLOR_SUPERVISED: &str = "#1f77b4";
const COLOR_SURE: &str = "#ff7f0e";
const COLOR_DIAGONAL: &str = "#888888";
const COLOR_AXIS: &str = "#222222";

/// Minimum number of histogram bins regardless of what the bin-width rule
/// suggests.
pub const MIN_HISTOGRAM_BINS: usize = 10;

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("cannot plot an empty coverage curve")]
    EmptyCurve,
    #[error("cannot plot a histogram of an empty sample")]
    EmptySample,
    #[error("histogram values must be finite")]
    NonFiniteValue,
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn write_svg(path: &Path, body: String) -> Result<(), PlotError> {
    fs::write(path, body).map_err(|source| PlotError::Io {
        path: path.display().to_string(),
        source,
    })
}

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn x(&self, v: f64) -> f64 {
        MARGIN_LEFT
            + (v - self.x_min) / (self.x_max - self.x_min)
                * (CHART_WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn y(&self, v: f64) -> f64 {
        // SVG y grows downward.
        CHART_HEIGHT
            - MARGIN_BOTTOM
            - (v - self.y_min) / (self.y_max - self.y_min)
                * (CHART_HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }
}

fn svg_header(out: &mut String) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{CHART_WIDTH}" height="{CHART_HEIGHT}" viewBox="0 0 {CHART_WIDTH} {CHART_HEIGHT}">"#
    );
    let _ = writeln!(
        out,
        r#"<rect x="0" y="0" width="{CHART_WIDTH}" height="{CHART_HEIGHT}" fill="white"/>"#
    );
}

fn axes(
    out: &mut String,
    frame: &Frame,
    x_label: &str,
    y_label: &str,
    x_ticks: &[f64],
    y_ticks: &[f64],
) {
    let x0 = frame.x(frame.x_min);
    let x1 = frame.x(frame.x_max);
    let y0 = frame.y(frame.y_min);
    let y1 = frame.y(frame.y_max);
    let _ = writeln!(
        out,
        r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="{COLOR_AXIS}" stroke-width="1"/>"#
    );
    let _ = writeln!(
        out,
        r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="{COLOR_AXIS}" stroke-width="1"/>"#
    );
    for &t in x_ticks {
        let x = frame.x(t);
        let _ = writeln!(
            out,
            r#"<line x1="{x}" y1="{y0}" x2="{x}" y2="{}" stroke="{COLOR_AXIS}" stroke-width="1"/>"#,
            y0 + 5.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{x}" y="{}" font-size="12" text-anchor="middle" fill="{COLOR_AXIS}">{}</text>"#,
            y0 + 20.0,
            tick_label(t)
        );
    }
    for &t in y_ticks {
        let y = frame.y(t);
        let _ = writeln!(
            out,
            r#"<line x1="{}" y1="{y}" x2="{x0}" y2="{y}" stroke="{COLOR_AXIS}" stroke-width="1"/>"#,
            x0 - 5.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="12" text-anchor="end" fill="{COLOR_AXIS}">{}</text>"#,
            x0 - 8.0,
            y + 4.0,
            tick_label(t)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-size="13" text-anchor="middle" fill="{COLOR_AXIS}">{x_label}</text>"#,
        (x0 + x1) / 2.0,
        CHART_HEIGHT - 12.0
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{}" font-size="13" text-anchor="middle" fill="{COLOR_AXIS}" transform="rotate(-90 16 {})">{y_label}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );
}

fn tick_label(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e6 {
        format!("{}", v as i64)
    } else {
        format!("{v:.2}")
    }
}

fn polyline(out: &mut String, frame: &Frame, points: &[(f64, f64)], color: &str) {
    let coords: Vec<String> = points
        .iter()
        .map(|&(x, y)| format!("{:.2},{:.2}", frame.x(x), frame.y(y)))
        .collect();
    let _ = writeln!(
        out,
        r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
        coords.join(" ")
    );
    for &(x, y) in points {
        let _ = writeln!(
            out,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
            frame.x(x),
            frame.y(y)
        );
    }
}

fn legend(out: &mut String, entries: &[(&str, &str)]) {
    let mut y = MARGIN_TOP + 8.0;
    for (color, label) in entries {
        let _ = writeln!(
            out,
            r#"<rect x="{}" y="{}" width="12" height="12" fill="{color}" fill-opacity="0.8"/>"#,
            MARGIN_LEFT + 12.0,
            y
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="12" fill="{COLOR_AXIS}">{label}</text>"#,
            MARGIN_LEFT + 30.0,
            y + 10.0
        );
        y += 18.0;
    }
}

/// Render the coverage curve: desired confidence (1−α) on x, empirical
/// coverage on y, with the y=x reference diagonal and one polyline per
/// calibration route.
pub fn plot_coverage(curve: &CoverageCurve, path: impl AsRef<Path>) -> Result<(), PlotError> {
    if curve.rows.is_empty() {
        return Err(PlotError::EmptyCurve);
    }
    let frame = Frame {
        x_min: 0.0,
        x_max: 1.0,
        y_min: 0.0,
        y_max: 1.0,
    };
    let mut out = String::new();
    svg_header(&mut out);
    let ticks = [0.0, 0.25, 0.5, 0.75, 1.0];
    axes(
        &mut out,
        &frame,
        "desired confidence level (1 - alpha)",
        "empirical coverage",
        &ticks,
        &ticks,
    );
    let _ = writeln!(
        &mut out,
        r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{COLOR_DIAGONAL}" stroke-width="1" stroke-dasharray="4 3"/>"#,
        frame.x(0.0),
        frame.y(0.0),
        frame.x(1.0),
        frame.y(1.0)
    );
    let supervised: Vec<(f64, f64)> = curve
        .rows
        .iter()
        .map(|r| (r.nominal, r.coverage_supervised))
        .collect();
    let sure: Vec<(f64, f64)> = curve
        .rows
        .iter()
        .map(|r| (r.nominal, r.coverage_sure))
        .collect();
    polyline(&mut out, &frame, &supervised, COLOR_SUPERVISED);
    polyline(&mut out, &frame, &sure, COLOR_SURE);
    legend(
        &mut out,
        &[
            (COLOR_SUPERVISED, "supervised calibration"),
            (COLOR_SURE, "self-supervised calibration"),
        ],
    );
    out.push_str("</svg>\n");
    write_svg(path.as_ref(), out)
}

/// Shared histogram edges via the Freedman-Diaconis rule on the pooled
/// sample, never fewer than `min_bins` bins. Quartiles use the nearest-rank
/// convention. A zero-spread sample gets unit-width padding around it.
pub fn freedman_diaconis_edges(pooled: &[f64], min_bins: usize) -> Result<Vec<f64>, PlotError> {
    if pooled.is_empty() {
        return Err(PlotError::EmptySample);
    }
    if pooled.iter().any(|v| !v.is_finite()) {
        return Err(PlotError::NonFiniteValue);
    }
    let mut sorted = pooled.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let n = sorted.len();
    let min = sorted[0];
    let max = sorted[n - 1];
    let (lo, range) = if max > min {
        (min, max - min)
    } else {
        (min - 0.5, 1.0)
    };
    let rank = |q: f64| -> f64 {
        let k = ((q * n as f64).ceil() as usize).clamp(1, n);
        sorted[k - 1]
    };
    let iqr = rank(0.75) - rank(0.25);
    let fd_width = 2.0 * iqr / (n as f64).cbrt();
    let bins = if fd_width > 0.0 {
        ((range / fd_width).ceil() as usize).max(min_bins)
    } else {
        min_bins
    };
    Ok((0..=bins)
        .map(|i| lo + range * i as f64 / bins as f64)
        .collect())
}

/// Bin counts over `edges`: half-open bins [e_i, e_{i+1}) with the last bin
/// closed; values outside the edge span clamp into the end bins.
pub fn histogram_counts(values: &[f64], edges: &[f64]) -> Vec<usize> {
    let bins = edges.len().saturating_sub(1);
    let mut counts = vec![0usize; bins];
    if bins == 0 {
        return counts;
    }
    let lo = edges[0];
    let hi = edges[bins];
    let range = hi - lo;
    for &v in values {
        let idx = if range > 0.0 {
            (((v - lo) / range * bins as f64).floor() as isize).clamp(0, bins as isize - 1) as usize
        } else {
            0
        };
        counts[idx] += 1;
    }
    counts
}

/// Render the two score samples as overlaid semi-transparent histograms on
/// shared Freedman-Diaconis bins.
pub fn plot_histogram(
    scores_supervised: &[f64],
    scores_sure: &[f64],
    path: impl AsRef<Path>,
) -> Result<(), PlotError> {
    if scores_supervised.is_empty() || scores_sure.is_empty() {
        return Err(PlotError::EmptySample);
    }
    let pooled: Vec<f64> = scores_supervised
        .iter()
        .chain(scores_sure)
        .copied()
        .collect();
    let edges = freedman_diaconis_edges(&pooled, MIN_HISTOGRAM_BINS)?;
    let sup_counts = histogram_counts(scores_supervised, &edges);
    let sure_counts = histogram_counts(scores_sure, &edges);
    let max_count = sup_counts
        .iter()
        .chain(&sure_counts)
        .copied()
        .max()
        .unwrap_or(1)
        .max(1);

    let frame = Frame {
        x_min: edges[0],
        x_max: edges[edges.len() - 1],
        y_min: 0.0,
        y_max: max_count as f64,
    };
    let mut out = String::new();
    svg_header(&mut out);
    let x_ticks: Vec<f64> = (0..=4)
        .map(|i| frame.x_min + (frame.x_max - frame.x_min) * i as f64 / 4.0)
        .collect();
    let y_ticks: Vec<f64> = (0..=4).map(|i| max_count as f64 * i as f64 / 4.0).collect();
    axes(&mut out, &frame, "score", "count", &x_ticks, &y_ticks);
    for (counts, color) in [(&sup_counts, COLOR_SUPERVISED), (&sure_counts, COLOR_SURE)] {
        for (i, &count) in counts.iter().enumerate() {
            if count == 0 {
                continue;
            }
            let x = frame.x(edges[i]);
            let w = frame.x(edges[i + 1]) - x;
            let y = frame.y(count as f64);
            let h = frame.y(0.0) - y;
            let _ = writeln!(
                &mut out,
                r#"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" fill="{color}" fill-opacity="0.45"/>"#
            );
        }
    }
    legend(
        &mut out,
        &[
            (COLOR_SUPERVISED, "supervised scores"),
            (COLOR_SURE, "risk-estimate scores"),
        ],
    );
    out.push_str("</svg>\n");
    write_svg(path.as_ref(), out)
}
