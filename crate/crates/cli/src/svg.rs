//! Minimal static SVG charts for the report's plot data.

use std::fmt::Write;

const W: f64 = 720.0;
const H: f64 = 360.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 16.0;
const TOP: f64 = 32.0;
const BOTTOM: f64 = 40.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Frame {
    n: usize,
    lo: f64,
    hi: f64,
}

impl Frame {
    fn x(&self, i: usize) -> f64 {
        let span = (self.n.max(2) - 1) as f64;
        LEFT + (W - LEFT - RIGHT) * i as f64 / span
    }

    fn y(&self, v: f64) -> f64 {
        TOP + (H - TOP - BOTTOM) * (1.0 - (v - self.lo) / (self.hi - self.lo))
    }
}

fn open(out: &mut String, title: &str, labels: &[String], frame: &Frame) {
    let _ = write!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"11\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{LEFT}\" y=\"20\" font-size=\"14\">{}</text>\n",
        escape(title)
    );
    let (x0, x1, y0, y1) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
    let _ = writeln!(out, "<path d=\"M{x0},{y0} L{x0},{y1} L{x1},{y1}\" fill=\"none\" stroke=\"#444\"/>");
    for v in [frame.lo, (frame.lo + frame.hi) / 2.0, frame.hi] {
        let y = frame.y(v);
        let _ = writeln!(out, "<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>", LEFT - 6.0, y + 4.0, tick(v));
        let _ = writeln!(out, "<line x1=\"{x0}\" y1=\"{y:.1}\" x2=\"{x1}\" y2=\"{y:.1}\" stroke=\"#ddd\"/>");
    }
    if let (Some(first), Some(last)) = (labels.first(), labels.last()) {
        let _ = writeln!(out, "<text x=\"{x0}\" y=\"{}\">{}</text>", H - 16.0, escape(first));
        let _ = writeln!(out, "<text x=\"{x1}\" y=\"{}\" text-anchor=\"end\">{}</text>", H - 16.0, escape(last));
    }
}

fn tick(v: f64) -> String {
    if v.abs() >= 100.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

fn legend(out: &mut String, names: &[&str]) {
    for (i, name) in names.iter().enumerate().take(12) {
        let x = LEFT + 8.0 + (i % 6) as f64 * 100.0;
        let y = TOP + 12.0 + (i / 6) as f64 * 14.0;
        let _ = writeln!(out, "<rect x=\"{x}\" y=\"{}\" width=\"10\" height=\"10\" fill=\"{}\"/>", y - 9.0, color(i));
        let _ = writeln!(out, "<text x=\"{}\" y=\"{y}\">{}</text>", x + 14.0, escape(name));
    }
}

/// One polyline per series over shared x labels.
pub fn line_chart(title: &str, labels: &[String], series: &[(&str, &[f64])]) -> String {
    let values = series.iter().flat_map(|(_, v)| v.iter().copied()).filter(|v| v.is_finite());
    let (mut lo, mut hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        (lo, hi) = (lo - 0.5, hi + 0.5);
    }
    let pad = (hi - lo) * 0.05;
    let frame = Frame { n: labels.len(), lo: lo - pad, hi: hi + pad };
    let mut out = String::new();
    open(&mut out, title, labels, &frame);
    for (k, (_, v)) in series.iter().enumerate() {
        let points: Vec<String> = v
            .iter()
            .enumerate()
            .filter(|(_, y)| y.is_finite())
            .map(|(i, y)| format!("{:.1},{:.1}", frame.x(i), frame.y(*y)))
            .collect();
        let _ = writeln!(out, "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>", points.join(" "), color(k));
    }
    legend(&mut out, &series.iter().map(|(n, _)| *n).collect::<Vec<_>>());
    out.push_str("</svg>\n");
    out
}

/// Stacked areas of per-label shares; `layers[k][i]` is layer `k` at label `i`.
pub fn stacked_chart(title: &str, labels: &[String], names: &[&str], layers: &[Vec<f64>]) -> String {
    let frame = Frame { n: labels.len(), lo: 0.0, hi: 1.0 };
    let mut out = String::new();
    open(&mut out, title, labels, &frame);
    let mut base = vec![0.0; labels.len()];
    for (k, layer) in layers.iter().enumerate() {
        let top: Vec<f64> = base.iter().zip(layer).map(|(b, v)| b + v).collect();
        let upper = (0..labels.len()).map(|i| format!("{:.1},{:.1}", frame.x(i), frame.y(top[i])));
        let lower = (0..labels.len()).rev().map(|i| format!("{:.1},{:.1}", frame.x(i), frame.y(base[i])));
        let points: Vec<String> = upper.chain(lower).collect();
        let _ = writeln!(out, "<polygon points=\"{}\" fill=\"{}\" fill-opacity=\"0.85\"/>", points.join(" "), color(k));
        base = top;
    }
    legend(&mut out, names);
    out.push_str("</svg>\n");
    out
}
