//! CSV and SVG renderings of a risk report.

use std::fmt::Write as _;

use super::{RiskReport, RiskRow};
use crate::format::fmt12;

pub const CSV_HEADER: &str = "n,x0,h_star,q05,q25,median,q75,q95,mse,runs,seed";

/// One line per `(n, x₀)` cell; `x0` is `0` for the estimator at the origin.
pub fn write_csv(report: &RiskReport) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in &report.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.n,
            fmt12(r.x0.unwrap_or(0.0)),
            fmt12(r.h_star),
            fmt12(r.q05),
            fmt12(r.q25),
            fmt12(r.median),
            fmt12(r.q75),
            fmt12(r.q95),
            fmt12(r.mse),
            r.runs,
            r.seed
        );
    }
    out
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 60.0;

fn category(r: &RiskRow, by_point: bool) -> String {
    if by_point {
        fmt12(r.x0.unwrap_or(0.0))
    } else {
        r.n.to_string()
    }
}

/// Box plot of the absolute errors: whiskers at the 5% and 95% quantiles,
/// box at the quartiles. Boxes are grouped by `x₀` when the report holds a
/// single `n`, otherwise by `n`.
pub fn render_svg(report: &RiskReport, title: &str) -> String {
    let rows = &report.rows;
    let mut ns: Vec<usize> = rows.iter().map(|r| r.n).collect();
    ns.dedup();
    let by_point = ns.len() == 1;
    let top = rows.iter().map(|r| r.q95).fold(0.0f64, f64::max).max(f64::MIN_POSITIVE);
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let y_of = |v: f64| HEIGHT - MARGIN - plot_h * v / top;
    let slot = plot_w / rows.len().max(1) as f64;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{m}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{m}" y1="{t}" x2="{m}" y2="{b}" stroke="black"/>"#,
        m = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN,
        t = MARGIN
    );
    for k in 0..=4 {
        let v = top * k as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#,
            MARGIN - 6.0,
            y_of(v) + 4.0,
            short(v)
        );
    }
    for (i, r) in rows.iter().enumerate() {
        let cx = MARGIN + slot * (i as f64 + 0.5);
        let half = (slot * 0.3).min(24.0);
        let _ = writeln!(
            svg,
            r#"<line x1="{cx:.1}" y1="{:.1}" x2="{cx:.1}" y2="{:.1}" stroke="black"/>"#,
            y_of(r.q05),
            y_of(r.q95)
        );
        let _ = writeln!(
            svg,
            r##"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="#9ecae1" stroke="black"/>"##,
            cx - half,
            y_of(r.q75),
            2.0 * half,
            (y_of(r.q25) - y_of(r.q75)).max(0.5)
        );
        let _ = writeln!(
            svg,
            r#"<line x1="{:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="black" stroke-width="2"/>"#,
            cx - half,
            cx + half,
            y = y_of(r.median)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{cx:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            HEIGHT - MARGIN + 16.0,
            category(r, by_point)
        );
    }
    let axis = if by_point { "x0" } else { "n" };
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{axis}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 16.0
    );
    svg.push_str("</svg>\n");
    svg
}

fn short(v: f64) -> String {
    crate::format::fmt_sig(v, 3)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
