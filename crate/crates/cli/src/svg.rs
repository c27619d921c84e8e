//! Minimal SVG scatter plots.

use std::fmt::Write;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];
const UNLABELED: &str = "#c8c8c8";
const PANEL: f64 = 360.0;
const MARGIN: f64 = 24.0;

fn color(label: i64) -> &'static str {
    if label < 0 {
        UNLABELED
    } else {
        PALETTE[label as usize % PALETTE.len()]
    }
}

/// A panel of 2-d points with one color class per point (`-1` is gray).
pub struct Panel<'a> {
    pub title: &'a str,
    pub points: &'a [(f64, f64)],
    pub labels: &'a [i64],
}

fn bounds(points: &[(f64, f64)]) -> (f64, f64, f64, f64) {
    let mut b = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in points {
        b = (b.0.min(x), b.1.max(x), b.2.min(y), b.3.max(y));
    }
    if !b.0.is_finite() {
        return (-1.0, 1.0, -1.0, 1.0);
    }
    let pad = |lo: f64, hi: f64| if hi - lo < 1e-12 { (lo - 1.0, hi + 1.0) } else { (lo, hi) };
    let (x0, x1) = pad(b.0, b.1);
    let (y0, y1) = pad(b.2, b.3);
    (x0, x1, y0, y1)
}

fn draw_panel(out: &mut String, panel: &Panel, offset: f64) {
    let (x0, x1, y0, y1) = bounds(panel.points);
    let inner = PANEL - 2.0 * MARGIN;
    let _ = writeln!(
        out,
        r##"<g transform="translate({offset},0)"><rect x="0.5" y="0.5" width="{w}" height="{w}" fill="white" stroke="#444"/><text x="{tx}" y="16" font-size="13" text-anchor="middle" font-family="sans-serif">{t}</text>"##,
        w = PANEL - 1.0,
        tx = PANEL / 2.0,
        t = escape(panel.title),
    );
    // Unlabeled points first so classes stay visible on top.
    let mut order: Vec<usize> = (0..panel.points.len()).collect();
    order.sort_by_key(|&i| panel.labels[i] >= 0);
    for i in order {
        let (x, y) = panel.points[i];
        let px = MARGIN + (x - x0) / (x1 - x0) * inner;
        let py = PANEL - MARGIN - (y - y0) / (y1 - y0) * inner;
        let _ = writeln!(
            out,
            r#"<circle cx="{px:.2}" cy="{py:.2}" r="2.2" fill="{}" fill-opacity="0.75"/>"#,
            color(panel.labels[i])
        );
    }
    out.push_str("</g>\n");
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Panels laid out left to right.
pub fn render(panels: &[Panel]) -> String {
    let width = PANEL * panels.len() as f64;
    let mut out = format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{PANEL}" viewBox="0 0 {width} {PANEL}">"#
    );
    out.push('\n');
    for (i, p) in panels.iter().enumerate() {
        draw_panel(&mut out, p, i as f64 * PANEL);
    }
    out.push_str("</svg>\n");
    out
}

/// First two coordinates of every row (the second is `0` for 1-d embeddings).
pub fn xy(q: &nalgebra::DMatrix<f64>) -> Vec<(f64, f64)> {
    (0..q.nrows())
        .map(|i| (q[(i, 0)], if q.ncols() > 1 { q[(i, 1)] } else { 0.0 }))
        .collect()
}
