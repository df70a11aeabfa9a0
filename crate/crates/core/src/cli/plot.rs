//! SVG rendering of mean hypervolume per round with ±1 std bands.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::engine::{mean_std, HvRow};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN: f64 = 56.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub method: String,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Number of (run, task) series averaged.
    pub series: usize,
}

/// One curve per method; each point averages every (run, task) series that
/// reaches that round. `runs` holds the rows of each hv_curve.csv.
pub fn curves(runs: &[Vec<HvRow>]) -> Vec<Curve> {
    let mut by_method: BTreeMap<&str, Vec<Vec<f64>>> = BTreeMap::new();
    for rows in runs {
        let mut series: BTreeMap<(&str, usize), Vec<(usize, f64)>> = BTreeMap::new();
        for r in rows {
            series.entry((r.method.as_str(), r.task)).or_default().push((r.round, r.hv));
        }
        for ((method, _), mut points) in series {
            points.sort_by_key(|p| p.0);
            by_method.entry(method).or_default().push(points.into_iter().map(|p| p.1).collect());
        }
    }
    by_method
        .into_iter()
        .map(|(method, series)| {
            let len = series.iter().map(Vec::len).max().unwrap_or(0);
            let (mean, std) = (0..len)
                .map(|t| mean_std(&series.iter().filter_map(|s| s.get(t).copied()).collect::<Vec<_>>()))
                .unzip();
            Curve { method: method.to_string(), mean, std, series: series.len() }
        })
        .collect()
}

fn join(values: &[f64]) -> String {
    values.iter().map(f64::to_string).collect::<Vec<_>>().join(" ")
}

pub fn render_svg(curves: &[Curve]) -> String {
    let rounds = curves.iter().map(|c| c.mean.len()).max().unwrap_or(1).max(2) - 1;
    let lo = curves.iter().flat_map(|c| c.mean.iter().zip(&c.std).map(|(m, s)| m - s)).fold(f64::INFINITY, f64::min);
    let hi = curves.iter().flat_map(|c| c.mean.iter().zip(&c.std).map(|(m, s)| m + s)).fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if lo.is_finite() && hi > lo { (lo, hi) } else if lo.is_finite() { (lo - 0.5, lo + 0.5) } else { (0.0, 1.0) };
    let px = |t: usize| MARGIN + (WIDTH - 2.0 * MARGIN) * t as f64 / rounds as f64;
    let py = |v: f64| HEIGHT - MARGIN - (HEIGHT - 2.0 * MARGIN) * (v - lo) / (hi - lo);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let (x0, x1, y0, y1) = (MARGIN, WIDTH - MARGIN, HEIGHT - MARGIN, MARGIN);
    let _ = writeln!(svg, r#"<path d="M{x0:.2},{y1:.2} L{x0:.2},{y0:.2} L{x1:.2},{y0:.2}" stroke="black" fill="none"/>"#);
    let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">round</text>"#, (x0 + x1) / 2.0, HEIGHT - 16.0);
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">hypervolume</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );
    for (label, v) in [(lo, lo), (hi, hi)] {
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{label:.4}</text>"#, x0 - 4.0, py(v) + 4.0);
    }
    let _ = writeln!(svg, r#"<text x="{x0:.2}" y="{:.2}" text-anchor="middle">0</text>"#, y0 + 16.0);
    let _ = writeln!(svg, r#"<text x="{x1:.2}" y="{:.2}" text-anchor="middle">{rounds}</text>"#, y0 + 16.0);

    for (i, c) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let upper: Vec<String> = (0..c.mean.len()).map(|t| format!("{:.2},{:.2}", px(t), py(c.mean[t] + c.std[t]))).collect();
        let lower: Vec<String> =
            (0..c.mean.len()).rev().map(|t| format!("{:.2},{:.2}", px(t), py(c.mean[t] - c.std[t]))).collect();
        let _ = writeln!(
            svg,
            r#"<polygon class="band" points="{} {}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
            upper.join(" "),
            lower.join(" ")
        );
        let line: Vec<String> = (0..c.mean.len()).map(|t| format!("{:.2},{:.2}", px(t), py(c.mean[t]))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline class="curve" data-method="{}" data-values="{}" data-std="{}" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            c.method,
            join(&c.mean),
            join(&c.std),
            line.join(" ")
        );
        let ly = MARGIN + 16.0 * i as f64;
        let _ = writeln!(svg, r#"<rect x="{:.2}" y="{:.2}" width="12" height="3" fill="{color}"/>"#, x1 - 150.0, ly - 4.0);
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{ly:.2}">{} (n={})</text>"#, x1 - 132.0, c.method, c.series);
    }
    svg.push_str("</svg>\n");
    svg
}
