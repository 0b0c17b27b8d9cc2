//! Standalone SVG plots of per-step error percentiles.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufReader;
use std::path::Path;

use super::results::{read_rows, ResultRow};
use crate::error::{Error, Result};

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 230.0;
const TOP: f64 = 44.0;
const BOTTOM: f64 = 56.0;
const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];
/// Axis columns that may distinguish series.
const AXES: [&str; 9] = [
    "experiment",
    "pole",
    "noise_mult",
    "dim",
    "regularized",
    "model",
    "formulation",
    "train_trajs",
    "mode",
];

#[derive(Clone, Debug, PartialEq)]
pub struct PlotSpec {
    pub title: String,
    /// Columns whose values name a series. Empty means every axis column
    /// that varies across the selected rows.
    pub group_by: Vec<String>,
    /// `(column, value)` pairs a row must match.
    pub filters: Vec<(String, String)>,
    /// Series labels that must be present, in legend order. Empty plots all.
    pub series: Vec<String>,
    pub log_y: bool,
}

impl Default for PlotSpec {
    fn default() -> Self {
        Self {
            title: String::new(),
            group_by: Vec::new(),
            filters: Vec::new(),
            series: Vec::new(),
            log_y: true,
        }
    }
}

/// Points of one series, sorted by step.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    pub steps: Vec<f64>,
    pub p50: Vec<f64>,
    pub p65: Vec<f64>,
    pub p95: Vec<f64>,
}

fn check_column(name: &str) -> Result<()> {
    if AXES.contains(&name) {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "'{name}' is not a series column; choose from {}",
            AXES.join(", ")
        )))
    }
}

fn normalize_label(s: &str) -> String {
    s.chars().filter(|c| !c.is_whitespace()).collect()
}

/// Groups rows into labelled series (`column=value, ...`).
pub fn collect_series(rows: &[ResultRow], spec: &PlotSpec) -> Result<Vec<Series>> {
    for (col, _) in &spec.filters {
        check_column(col)?;
    }
    for col in &spec.group_by {
        check_column(col)?;
    }
    let selected: Vec<&ResultRow> = rows
        .iter()
        .filter(|r| spec.filters.iter().all(|(c, v)| r.column(c).as_deref() == Some(v.as_str())))
        .collect();
    let group_by: Vec<String> = if spec.group_by.is_empty() {
        let mut varying: Vec<String> = AXES
            .iter()
            .filter(|c| {
                let first = selected.first().and_then(|r| r.column(c));
                selected.iter().any(|r| r.column(c) != first)
            })
            .map(|c| c.to_string())
            .collect();
        // the model label already implies its formulation
        if varying.iter().any(|c| c == "model") {
            varying.retain(|c| c != "formulation");
        }
        varying
    } else {
        spec.group_by.clone()
    };
    // first-appearance order, so legends follow the sweep order
    let mut groups: Vec<(String, Vec<&ResultRow>)> = Vec::new();
    for r in &selected {
        let label = if group_by.is_empty() {
            r.experiment.clone()
        } else {
            group_by
                .iter()
                .map(|c| format!("{c}={}", r.column(c).unwrap_or_default()))
                .collect::<Vec<_>>()
                .join(", ")
        };
        match groups.iter_mut().find(|(l, _)| *l == label) {
            Some((_, rs)) => rs.push(r),
            None => groups.push((label, vec![r])),
        }
    }
    let mut series: Vec<Series> = groups
        .into_iter()
        .map(|(label, mut rs)| {
            rs.sort_by_key(|r| r.step);
            Series {
                label,
                steps: rs.iter().map(|r| r.step as f64).collect(),
                p50: rs.iter().map(|r| r.p50).collect(),
                p65: rs.iter().map(|r| r.p65).collect(),
                p95: rs.iter().map(|r| r.p95).collect(),
            }
        })
        .collect();
    if !spec.series.is_empty() {
        let missing: Vec<&String> = spec
            .series
            .iter()
            .filter(|want| !series.iter().any(|s| normalize_label(&s.label) == normalize_label(want)))
            .collect();
        if !missing.is_empty() {
            let have: Vec<&str> = series.iter().map(|s| s.label.as_str()).collect();
            return Err(Error::Config(format!(
                "missing series: {}; available: {}",
                missing.iter().map(|s| format!("'{s}'")).collect::<Vec<_>>().join(", "),
                if have.is_empty() { "none".to_string() } else { have.join(" | ") }
            )));
        }
        series = spec
            .series
            .iter()
            .filter_map(|want| series.iter().find(|s| normalize_label(&s.label) == normalize_label(want)).cloned())
            .collect();
    }
    if series.is_empty() {
        return Err(Error::Empty("no rows match the plot filters".into()));
    }
    Ok(series)
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

struct Scale {
    lo: f64,
    hi: f64,
    px_lo: f64,
    px_hi: f64,
    log: bool,
}

impl Scale {
    fn map(&self, v: f64) -> f64 {
        let v = if self.log { v.max(10f64.powf(self.lo)).log10() } else { v };
        let f = if self.hi > self.lo { (v - self.lo) / (self.hi - self.lo) } else { 0.5 };
        self.px_lo + f * (self.px_hi - self.px_lo)
    }
}

fn nice_step(span: f64, target: usize) -> f64 {
    let raw = span / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| span / s <= target as f64).unwrap_or(10.0 * mag)
}

fn fmt_tick(v: f64) -> String {
    if v == v.round() && v.abs() < 1e6 {
        format!("{v:.0}")
    } else {
        format!("{v}")
    }
}

fn polyline_points(xs: &[f64], ys: &[f64], sx: &Scale, sy: &Scale) -> String {
    xs.iter()
        .zip(ys)
        .map(|(x, y)| format!("{:.2},{:.2}", sx.map(*x), sy.map(*y)))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Renders the series as an SVG document.
pub fn render_svg(series: &[Series], title: &str, log_y: bool) -> Result<String> {
    if series.is_empty() {
        return Err(Error::Empty("nothing to plot".into()));
    }
    let all_x = series.iter().flat_map(|s| s.steps.iter().copied());
    let (mut x_lo, mut x_hi) = all_x.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if x_lo == x_hi {
        x_lo -= 1.0;
        x_hi += 1.0;
    }
    let values: Vec<f64> = series
        .iter()
        .flat_map(|s| s.p50.iter().chain(&s.p65).chain(&s.p95).copied())
        .filter(|v| v.is_finite())
        .collect();
    if values.is_empty() {
        return Err(Error::NonFinite("every plotted value is non-finite".into()));
    }
    let (y_lo, y_hi) = if log_y {
        let pos: Vec<f64> = values.iter().copied().filter(|v| *v > 0.0).collect();
        let min_pos = pos.iter().copied().fold(f64::INFINITY, f64::min);
        let max_pos = pos.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if pos.is_empty() {
            (-1.0, 0.0)
        } else {
            let lo = min_pos.log10().floor();
            let hi = max_pos.log10().ceil();
            if hi > lo { (lo, hi) } else { (lo, lo + 1.0) }
        }
    } else {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min).min(0.0);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi > lo { (lo, hi) } else { (lo, lo + 1.0) }
    };
    let (px_left, px_right) = (LEFT, WIDTH - RIGHT);
    let (px_top, px_bottom) = (TOP, HEIGHT - BOTTOM);
    let sx = Scale { lo: x_lo, hi: x_hi, px_lo: px_left, px_hi: px_right, log: false };
    let sy = Scale { lo: y_lo, hi: y_hi, px_lo: px_bottom, px_hi: px_top, log: log_y };

    let mut svg = String::new();
    let w = &mut svg;
    let _ = writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(w, r#"<title>{}</title>"#, escape(title));
    let _ = writeln!(
        w,
        r#"<defs><clipPath id="plot-area"><rect x="{px_left}" y="{px_top}" width="{}" height="{}"/></clipPath></defs>"#,
        px_right - px_left,
        px_bottom - px_top
    );
    let _ = writeln!(w, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);

    // grid and ticks
    let _ = writeln!(w, r##"<g stroke="#dddddd" stroke-width="1">"##);
    let mut y_ticks = Vec::new();
    if log_y {
        let stride = ((y_hi - y_lo) / 8.0).ceil().max(1.0);
        let mut e = y_lo;
        while e <= y_hi + 1e-9 {
            y_ticks.push((10f64.powf(e), format!("1e{}", e as i64)));
            e += stride;
        }
    } else {
        let step = nice_step(y_hi - y_lo, 6);
        let mut v = (y_lo / step).ceil() * step;
        while v <= y_hi + 1e-9 * step {
            y_ticks.push((v, fmt_tick(v)));
            v += step;
        }
    }
    let x_step = nice_step(x_hi - x_lo, 8).max(1.0);
    let mut x_ticks = Vec::new();
    let mut v = (x_lo / x_step).ceil() * x_step;
    while v <= x_hi + 1e-9 {
        x_ticks.push(v);
        v += x_step;
    }
    for (v, _) in &y_ticks {
        let y = sy.map(*v);
        let _ = writeln!(w, r#"<line x1="{px_left}" y1="{y:.2}" x2="{px_right}" y2="{y:.2}"/>"#);
    }
    for v in &x_ticks {
        let x = sx.map(*v);
        let _ = writeln!(w, r#"<line x1="{x:.2}" y1="{px_top}" x2="{x:.2}" y2="{px_bottom}"/>"#);
    }
    let _ = writeln!(w, "</g>");
    let _ = writeln!(
        w,
        r#"<rect x="{px_left}" y="{px_top}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        px_right - px_left,
        px_bottom - px_top
    );
    for (v, label) in &y_ticks {
        let _ = writeln!(
            w,
            r#"<text x="{}" y="{:.2}" text-anchor="end" dominant-baseline="middle">{}</text>"#,
            px_left - 6.0,
            sy.map(*v),
            escape(label)
        );
    }
    for v in &x_ticks {
        let _ = writeln!(
            w,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
            sx.map(*v),
            px_bottom + 18.0,
            fmt_tick(*v)
        );
    }
    let _ = writeln!(
        w,
        r#"<text x="{:.1}" y="{}" text-anchor="middle" font-size="14">{}</text>"#,
        (px_left + px_right) / 2.0,
        TOP - 16.0,
        escape(title)
    );
    let _ = writeln!(
        w,
        r#"<text x="{:.1}" y="{}" text-anchor="middle">step</text>"#,
        (px_left + px_right) / 2.0,
        HEIGHT - 14.0
    );
    let _ = writeln!(
        w,
        r#"<text x="18" y="{0:.1}" text-anchor="middle" transform="rotate(-90 18 {0:.1})">normalized MSE</text>"#,
        (px_top + px_bottom) / 2.0
    );

    // series: p95 band, p65 band, median
    let _ = writeln!(w, r#"<g clip-path="url(#plot-area)">"#);
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if s.steps.len() == 1 {
            let (x, y) = (sx.map(s.steps[0]), sy.map(s.p50[0]));
            let _ = writeln!(
                w,
                r#"<line x1="{x:.2}" y1="{y:.2}" x2="{x:.2}" y2="{:.2}" stroke="{color}" stroke-opacity="0.4" stroke-width="3"/>"#,
                sy.map(s.p95[0])
            );
            let _ = writeln!(w, r#"<circle cx="{x:.2}" cy="{y:.2}" r="4" fill="{color}"/>"#);
            continue;
        }
        for (upper, opacity) in [(&s.p95, 0.15), (&s.p65, 0.3)] {
            let rev_x: Vec<f64> = s.steps.iter().rev().copied().collect();
            let rev_y: Vec<f64> = s.p50.iter().rev().copied().collect();
            let _ = writeln!(
                w,
                r#"<polygon points="{} {}" fill="{color}" fill-opacity="{opacity}" stroke="none"/>"#,
                polyline_points(&s.steps, upper, &sx, &sy),
                polyline_points(&rev_x, &rev_y, &sx, &sy)
            );
        }
        let _ = writeln!(
            w,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.8"/>"#,
            polyline_points(&s.steps, &s.p50, &sx, &sy)
        );
    }
    let _ = writeln!(w, "</g>");

    // legend
    let lx = px_right + 14.0;
    let _ = writeln!(w, r#"<g font-size="11">"#);
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let y = px_top + 8.0 + 18.0 * i as f64;
        let _ = writeln!(w, r#"<rect x="{lx}" y="{:.1}" width="14" height="10" fill="{color}"/>"#, y - 5.0);
        let _ = writeln!(
            w,
            r#"<text x="{}" y="{y:.1}" dominant-baseline="middle">{}</text>"#,
            lx + 20.0,
            escape(&s.label)
        );
    }
    let _ = writeln!(w, "</g>");
    let _ = writeln!(w, "</svg>");
    Ok(svg)
}

/// Reads a results CSV and writes the requested plot to `out`. Nothing is
/// written when the series cannot be resolved; the file appears atomically.
pub fn emit_plot(results_csv: &Path, spec: &PlotSpec, out: &Path) -> Result<()> {
    let rows = read_rows(BufReader::new(File::open(results_csv)?))?;
    let series = collect_series(&rows, spec)?;
    let svg = render_svg(&series, &spec.title, spec.log_y)?;
    let tmp = out.with_extension("svg.partial");
    fs::write(&tmp, svg)?;
    if let Err(e) = fs::rename(&tmp, out) {
        let _ = fs::remove_file(&tmp);
        return Err(e.into());
    }
    Ok(())
}
