//! Minimal SVG charts: a line chart with optional log-scaled y axis and a
//! time-by-space heatmap.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 56.0;

fn header(out: &mut String, width: f64, height: f64) {
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    )
    .expect("writing to a string");
    writeln!(out, r#"<rect width="{width}" height="{height}" fill="white"/>"#).expect("writing to a string");
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Line chart of `ys` against `n = 1, 2, ...`. With `log_y`, nonpositive
/// values are dropped and the axis shows powers of ten.
pub fn line_chart(title: &str, y_label: &str, ys: &[f64], log_y: bool) -> String {
    let pts: Vec<(f64, f64)> = ys
        .iter()
        .enumerate()
        .filter(|(_, y)| y.is_finite() && (!log_y || **y > 0.0))
        .map(|(i, y)| ((i + 1) as f64, if log_y { y.log10() } else { *y }))
        .collect();
    let mut out = String::new();
    header(&mut out, WIDTH, HEIGHT);
    writeln!(out, r#"<text x="{}" y="20" text-anchor="middle">{}</text>"#, WIDTH / 2.0, escape(title))
        .expect("writing to a string");
    let (x0, x1, y0, y1) = (MARGIN, WIDTH - 16.0, HEIGHT - MARGIN, 32.0);
    writeln!(out, r#"<path d="M{x0} {y1}V{y0}H{x1}" fill="none" stroke="black"/>"#).expect("writing to a string");
    writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">n</text>"#, (x0 + x1) / 2.0, HEIGHT - 12.0)
        .expect("writing to a string");
    writeln!(
        out,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    )
    .expect("writing to a string");
    if pts.is_empty() {
        out.push_str("</svg>\n");
        return out;
    }
    let nmax = pts.last().map(|p| p.0).unwrap_or(1.0).max(2.0);
    let (mut lo, mut hi) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
    if log_y {
        lo = lo.floor();
        hi = hi.ceil();
    }
    if hi - lo < 1e-300 {
        lo -= 0.5;
        hi += 0.5;
    }
    let sx = |n: f64| x0 + (n - 1.0) / (nmax - 1.0) * (x1 - x0);
    let sy = |v: f64| y0 - (v - lo) / (hi - lo) * (y0 - y1);
    for (v, label) in [(lo, lo), (hi, hi)] {
        let text = if log_y { format!("1e{}", label as i64) } else { format!("{label:.6}") };
        writeln!(out, r#"<text x="{}" y="{:.2}" text-anchor="end">{text}</text>"#, x0 - 4.0, sy(v) + 4.0)
            .expect("writing to a string");
    }
    writeln!(out, r#"<text x="{x1}" y="{}" text-anchor="end">{nmax}</text>"#, y0 + 16.0).expect("writing to a string");
    let path: Vec<String> = pts
        .iter()
        .enumerate()
        .map(|(i, (n, v))| format!("{}{:.2} {:.2}", if i == 0 { "M" } else { "L" }, sx(*n), sy(*v)))
        .collect();
    writeln!(out, r#"<path d="{}" fill="none" stroke="steelblue" stroke-width="1.5"/>"#, path.join(""))
        .expect("writing to a string");
    out.push_str("</svg>\n");
    out
}

/// One rect per `(row, column)` of `rows`, colored from white (0) to dark
/// blue (the maximum). Rows are time slices drawn top to bottom.
pub fn heatmap(title: &str, rows: &[Vec<f64>]) -> String {
    let cols = rows.first().map_or(0, |r| r.len());
    let cell = (4.0f64).max((480.0 / cols.max(1) as f64).floor()).min(16.0);
    let row_h = (2.0f64).max((480.0 / rows.len().max(1) as f64).floor()).min(16.0);
    let (width, height) = (cols as f64 * cell + 40.0, rows.len() as f64 * row_h + 60.0);
    let max = rows.iter().flatten().copied().fold(0.0, f64::max);
    let mut out = String::new();
    header(&mut out, width, height);
    writeln!(out, r#"<text x="{}" y="20" text-anchor="middle">{}</text>"#, width / 2.0, escape(title))
        .expect("writing to a string");
    writeln!(out, r#"<g id="cells" shape-rendering="crispEdges">"#).expect("writing to a string");
    for (k, row) in rows.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            let s = if max > 0.0 { (v / max).clamp(0.0, 1.0) } else { 0.0 };
            let (r, g, b) = (255.0 * (1.0 - s), 255.0 * (1.0 - 0.8 * s), 255.0 - 120.0 * s);
            writeln!(
                out,
                r#"<rect x="{}" y="{}" width="{cell}" height="{row_h}" fill="rgb({},{},{})"/>"#,
                20.0 + c as f64 * cell,
                36.0 + k as f64 * row_h,
                r.round() as u8,
                g.round() as u8,
                b.round() as u8
            )
            .expect("writing to a string");
        }
    }
    out.push_str("</g>\n");
    writeln!(out, r#"<text x="20" y="{}">x →, t ↓, max {max:.4}</text>"#, height - 8.0).expect("writing to a string");
    out.push_str("</svg>\n");
    out
}
