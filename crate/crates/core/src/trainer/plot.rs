//! Static plot artifacts from a metrics log: a CSV of moving averages and an SVG chart.

use std::fmt::Write as _;

use super::metrics::{moving_average, MetricRow};

/// `(step, reward moving average, q moving average)` per logged step.
pub fn smoothed(rows: &[MetricRow], window: usize) -> Vec<(u64, f64, f64)> {
    let rewards: Vec<f64> = rows.iter().map(|r| r.reward).collect();
    let qs: Vec<f64> = rows.iter().map(|r| r.q).collect();
    let (rm, qm) = (moving_average(&rewards, window), moving_average(&qs, window));
    rows.iter().zip(rm).zip(qm).map(|((r, a), b)| (r.step, a, b)).collect()
}

pub fn smoothed_csv(series: &[(u64, f64, f64)]) -> String {
    let mut out = String::from("step,reward_ma,q_ma\n");
    for (s, r, q) in series {
        let _ = writeln!(out, "{s},{r},{q}");
    }
    out
}

fn panel(out: &mut String, title: &str, points: &[(f64, f64)], top: f64, width: f64, height: f64) {
    let pad = 50.0;
    let _ = writeln!(out, r#"<text x="{pad}" y="{}" font-size="14">{title}</text>"#, top + 16.0);
    let (x0, x1) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let (y0, y1) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
    let sx = if x1 > x0 { (width - 2.0 * pad) / (x1 - x0) } else { 0.0 };
    let sy = if y1 > y0 { (height - 2.0 * pad) / (y1 - y0) } else { 0.0 };
    let base = top + height - pad;
    let _ = writeln!(
        out,
        r#"<rect x="{pad}" y="{}" width="{}" height="{}" fill="none" stroke="gray"/>"#,
        top + pad,
        width - 2.0 * pad,
        height - 2.0 * pad
    );
    if points.is_empty() {
        return;
    }
    let _ = writeln!(out, r#"<text x="4" y="{}" font-size="10">{y1:.3}</text>"#, top + pad + 4.0);
    let _ = writeln!(out, r#"<text x="4" y="{base}" font-size="10">{y0:.3}</text>"#);
    let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="10">step {x1}</text>"#, width - pad - 60.0, base + 16.0);
    let mut path = String::new();
    for (x, y) in points {
        let _ = write!(path, "{:.2},{:.2} ", pad + (x - x0) * sx, base - (y - y0) * sy);
    }
    let _ = writeln!(out, r#"<polyline fill="none" stroke="steelblue" stroke-width="1" points="{}"/>"#, path.trim_end());
}

/// Two stacked line charts: reward and Q moving averages against step.
pub fn smoothed_svg(series: &[(u64, f64, f64)], max_points: usize) -> String {
    let stride = (series.len() / max_points.max(1)).max(1);
    let thinned: Vec<_> = series.iter().step_by(stride).collect();
    let rewards: Vec<(f64, f64)> = thinned.iter().map(|(s, r, _)| (*s as f64, *r)).collect();
    let qs: Vec<(f64, f64)> = thinned.iter().map(|(s, _, q)| (*s as f64, *q)).collect();
    let (w, h) = (800.0, 300.0);
    let mut out = format!(r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{}">"#, 2.0 * h);
    out.push('\n');
    panel(&mut out, "reward (moving average)", &rewards, 0.0, w, h);
    panel(&mut out, "Q (moving average)", &qs, h, w, h);
    out.push_str("</svg>\n");
    out
}
