//! Minimal log-log plot of `δ̂_n` against `n`.

use std::fmt::Write;

use super::report::ExperimentReport;

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;

struct Series {
    name: &'static str,
    color: &'static str,
    dashed: bool,
    points: Vec<(f64, f64)>,
}

fn log_range(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let (lo, hi) = values
        .filter(|v| *v > 0.0 && v.is_finite())
        .map(f64::log10)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return None;
    }
    let (lo, hi) = (lo.floor(), hi.ceil());
    Some(if hi > lo { (lo, hi) } else { (lo, lo + 1.0) })
}

/// Renders an SVG document. Non-positive values are left out, so an empty
/// report still yields a valid (blank) plot.
pub fn render(report: &ExperimentReport) -> String {
    let pick = |f: &dyn Fn(&super::report::PointSummary) -> Option<f64>| -> Vec<(f64, f64)> {
        report
            .points
            .iter()
            .filter_map(|p| f(p).map(|v| (p.n as f64, v)))
            .filter(|&(_, v)| v > 0.0 && v.is_finite())
            .collect()
    };
    let series = [
        Series { name: "last iterate", color: "#1f77b4", dashed: false, points: pick(&|p| Some(p.mse_last.value)) },
        Series { name: "average", color: "#d62728", dashed: false, points: pick(&|p| Some(p.mse_average.value)) },
        Series { name: "online bound", color: "#555555", dashed: true, points: pick(&|p| p.online_bound.map(|b| b.total)) },
    ];

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="18" text-anchor="middle">mean squared error, {}</text>"#,
        LEFT + (W - LEFT - RIGHT) / 2.0,
        escape(&report.estimator)
    );

    let xr = log_range(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let yr = log_range(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let (Some((x0, x1)), Some((y0, y1))) = (xr, yr) else {
        out.push_str("</svg>\n");
        return out;
    };
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x.log10() - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (y1 - y.log10()) / (y1 - y0) * ph;

    let _ = writeln!(out, r##"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#000"/>"##);
    for e in x0 as i32..=x1 as i32 {
        let x = LEFT + (e as f64 - x0) / (x1 - x0) * pw;
        let _ = writeln!(
            out,
            r##"<line x1="{x:.1}" y1="{TOP}" x2="{x:.1}" y2="{}" stroke="#ddd"/><text x="{x:.1}" y="{}" text-anchor="middle">1e{e}</text>"##,
            TOP + ph,
            TOP + ph + 18.0
        );
    }
    for e in y0 as i32..=y1 as i32 {
        let y = TOP + (y1 - e as f64) / (y1 - y0) * ph;
        let _ = writeln!(
            out,
            r##"<line x1="{LEFT}" y1="{y:.1}" x2="{}" y2="{y:.1}" stroke="#ddd"/><text x="{}" y="{:.1}" text-anchor="end">1e{e}</text>"##,
            LEFT + pw,
            LEFT - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">n</text>"#, LEFT + pw / 2.0, H - 10.0);

    for (k, s) in series.iter().filter(|s| !s.points.is_empty()).enumerate() {
        let path: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let dash = if s.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="2"{dash}/>"#,
            path.join(" "),
            s.color
        );
        if !s.dashed {
            for &(x, y) in &s.points {
                let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{}"/>"#, sx(x), sy(y), s.color);
            }
        }
        let ly = TOP + 10.0 + 20.0 * k as f64;
        let lx = W - RIGHT + 12.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{}" stroke-width="2"{dash}/><text x="{}" y="{}">{}</text>"#,
            lx + 24.0,
            s.color,
            lx + 30.0,
            ly + 4.0,
            s.name
        );
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
