//! Line plots of true effect curves against the expected constant-effect
//! estimate, one panel per design, design scalar and curve family.

use std::fmt::Write;

pub struct Series {
    pub label: String,
    /// True `δ_{k,e}` for `e = 1..T-1`.
    pub truth: Vec<f64>,
    pub expected: f64,
}

pub struct Panel {
    pub title: String,
    pub series: Vec<Series>,
}

const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
const W: f64 = 360.0;
const H: f64 = 240.0;
const MARGIN: f64 = 40.0;

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn render(panels: &[Panel]) -> String {
    let cols = panels.len().clamp(1, 2);
    let rows = panels.len().div_ceil(cols).max(1);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" font-family="sans-serif" font-size="11">"#,
        W * cols as f64,
        H * rows as f64
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (idx, panel) in panels.iter().enumerate() {
        let ox = W * (idx % cols) as f64;
        let oy = H * (idx / cols) as f64;
        draw_panel(&mut out, panel, ox, oy);
    }
    out.push_str("</svg>\n");
    out
}

fn draw_panel(out: &mut String, panel: &Panel, ox: f64, oy: f64) {
    let values: Vec<f64> = panel
        .series
        .iter()
        .flat_map(|s| s.truth.iter().copied().chain(std::iter::once(s.expected)))
        .chain(std::iter::once(0.0))
        .collect();
    let mut lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo < 1e-9 {
        lo -= 0.5;
        hi += 0.5;
    }
    let pad = 0.08 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let n = panel.series.iter().map(|s| s.truth.len()).max().unwrap_or(1).max(2);
    let (x0, x1) = (ox + MARGIN, ox + W - 10.0);
    let (y0, y1) = (oy + H - MARGIN + 10.0, oy + 28.0);
    let sx = |e: f64| x0 + (e - 1.0) / (n as f64 - 1.0) * (x1 - x0);
    let sy = |v: f64| y0 + (v - lo) / (hi - lo) * (y1 - y0);

    let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" font-weight="bold">{}</text>"#, x0, oy + 16.0, esc(&panel.title));
    let _ = writeln!(
        out,
        r##"<rect x="{x0:.1}" y="{y1:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="#999"/>"##,
        x1 - x0,
        y0 - y1
    );
    let zero = sy(0.0);
    let _ = writeln!(out, r##"<line x1="{x0:.1}" y1="{zero:.1}" x2="{x1:.1}" y2="{zero:.1}" stroke="#ccc"/>"##);
    for (v, y) in [(lo, y0), (hi, y1)] {
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.2}</text>"#, x0 - 4.0, y + 4.0);
    }
    for e in 1..=n {
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{e}</text>"#, sx(e as f64), y0 + 14.0);
    }
    for (k, s) in panel.series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let points: Vec<String> = s
            .truth
            .iter()
            .enumerate()
            .map(|(e, v)| format!("{:.1},{:.1}", sx(e as f64 + 1.0), sy(*v)))
            .collect();
        let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, points.join(" "));
        let y = sy(s.expected);
        let _ = writeln!(
            out,
            r#"<line x1="{x0:.1}" y1="{y:.1}" x2="{x1:.1}" y2="{y:.1}" stroke="{color}" stroke-width="1.5" stroke-dasharray="6,4"/>"#
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" fill="{color}">{}</text>"#,
            x0 + 6.0 + 90.0 * k as f64,
            y1 + 14.0,
            esc(&s.label)
        );
    }
}
