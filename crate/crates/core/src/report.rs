//! Deterministic SVG line plots of metric tables.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::metrics::{MetricReport, MetricRow, AGGREGATE};

/// Scores that can be plotted against lead time.
pub const SCORES: [&str; 4] = ["rmse", "spread", "ssr", "crps"];

pub fn score_of(row: &MetricRow, score: &str) -> Option<f64> {
    match score {
        "rmse" => Some(row.rmse),
        "spread" => row.spread,
        "ssr" => row.ssr,
        "crps" => Some(row.crps),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// One series per report: `score` of `variable` against lead.
pub fn series(reports: &[(String, MetricReport)], variable: &str, score: &str) -> Vec<Series> {
    reports
        .iter()
        .map(|(label, r)| Series {
            label: label.clone(),
            points: r
                .rows
                .iter()
                .filter(|row| row.variable == variable)
                .filter_map(|row| score_of(row, score).map(|v| (row.lead as f64, v)))
                .filter(|(_, v)| v.is_finite())
                .collect(),
        })
        .filter(|s| !s.points.is_empty())
        .collect()
}

const COLOURS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

fn nice_ticks(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let span = (hi - lo).max(1e-12);
    let raw = span / n.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Renders a line plot. Output depends only on the inputs.
pub fn line_plot(title: &str, y_label: &str, series: &[Series], width: usize, height: usize) -> Result<String> {
    if series.is_empty() {
        return Err(Error::Empty("plot series"));
    }
    let (w, h) = (width as f64, height as f64);
    let (left, right, top, bottom) = (64.0, 160.0, 36.0, 48.0);
    let pts = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, 0.0f64, f64::MIN);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    y1 += 0.05 * (y1 - y0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + ph - (y - y0) / (y1 - y0) * ph;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        left + pw / 2.0,
        escape(title)
    );
    for t in nice_ticks(y0, y1, 5) {
        let y = sy(t);
        let _ =
            writeln!(svg, r##"<line x1="{left:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#e0e0e0"/>"##, left + pw);
        let _ =
            writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, left - 6.0, y + 4.0, fmt_tick(t));
    }
    for t in nice_ticks(x0, x1, 8) {
        let x = sx(t);
        let _ =
            writeln!(svg, r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, top + ph + 16.0, fmt_tick(t));
    }
    let _ = writeln!(
        svg,
        r#"<rect x="{left:.1}" y="{top:.1}" width="{pw:.1}" height="{ph:.1}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">lead (steps)</text>"#,
        left + pw / 2.0,
        h - 10.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        top + ph / 2.0,
        top + ph / 2.0,
        escape(y_label)
    );
    for (i, s) in series.iter().enumerate() {
        let colour = COLOURS[i % COLOURS.len()];
        let path: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y))).collect();
        let _ =
            writeln!(svg, r#"<polyline fill="none" stroke="{colour}" stroke-width="2" points="{}"/>"#, path.join(" "));
        let ly = top + 14.0 + 18.0 * i as f64;
        let lx = left + pw + 12.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{colour}" stroke-width="2"/>"#,
            lx + 20.0
        );
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, lx + 26.0, ly + 4.0, escape(&s.label));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// One plot per score of the aggregate rows, keyed by file name.
pub fn aggregate_plots(
    reports: &[(String, MetricReport)],
    width: usize,
    height: usize,
) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for score in SCORES {
        let s = series(reports, AGGREGATE, score);
        if s.is_empty() {
            continue;
        }
        out.push((
            format!("{score}.svg"),
            line_plot(&format!("{} (standardized)", score.to_uppercase()), score, &s, width, height)?,
        ));
    }
    Ok(out)
}
