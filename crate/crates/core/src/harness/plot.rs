//! Hand-written SVG of `dist` against iteration on a log scale.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::experiment::TRAJECTORY_HEADER;
use crate::error::{Error, Result};

pub const WIDTH: f64 = 800.0;
pub const HEIGHT: f64 = 500.0;
/// Smallest plotted distance; zeros and underflow land here.
pub const FLOOR: f64 = 1e-16;

const LEFT: f64 = 80.0;
const RIGHT: f64 = 130.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 6] = ["#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2", "#b07aa1"];

/// Parsed `(trial -> [(t, dist)])`, skipping rows whose `dist` is not finite.
pub fn read_trajectories(csv: &str) -> Result<BTreeMap<usize, Vec<(f64, f64)>>> {
    let mut lines = csv.lines().filter(|l| !l.trim().is_empty());
    match lines.next() {
        Some(h) if h.trim() == TRAJECTORY_HEADER => {}
        Some(h) => return Err(Error::Csv(format!("unexpected header `{h}`"))),
        None => return Err(Error::EmptyInput),
    }
    let mut out: BTreeMap<usize, Vec<(f64, f64)>> = BTreeMap::new();
    for (n, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(Error::Csv(format!(
                "row {} has {} fields, expected 9",
                n + 1,
                fields.len()
            )));
        }
        let bad = |what: &str| Error::Csv(format!("row {}: bad {what}", n + 1));
        let t: f64 = fields[0].parse().map_err(|_| bad("t"))?;
        let trial: usize = fields[1].parse().map_err(|_| bad("trial"))?;
        let dist: f64 = fields[2].parse().map_err(|_| bad("dist"))?;
        let series = out.entry(trial).or_default();
        if dist.is_finite() {
            series.push((t, dist));
        }
    }
    if out.values().all(|s| s.is_empty()) {
        return Err(Error::EmptyInput);
    }
    Ok(out)
}

fn log_dist(d: f64) -> f64 {
    d.max(FLOOR).log10()
}

/// Mean over trials at every `t` that has at least one finite value.
fn mean_series(series: &BTreeMap<usize, Vec<(f64, f64)>>) -> Vec<(f64, f64)> {
    let mut acc: BTreeMap<u64, (f64, f64, usize)> = BTreeMap::new();
    for points in series.values() {
        for &(t, d) in points {
            let e = acc.entry(t.to_bits()).or_insert((t, 0.0, 0));
            e.1 += d;
            e.2 += 1;
        }
    }
    let mut out: Vec<(f64, f64)> = acc.into_values().map(|(t, s, c)| (t, s / c as f64)).collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// Render the SVG document for a trajectory CSV.
pub fn render_svg(csv: &str) -> Result<String> {
    let series = read_trajectories(csv)?;
    let all = series.values().flatten();
    let (mut t_lo, mut t_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_lo, mut y_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(t, d) in all {
        t_lo = t_lo.min(t);
        t_hi = t_hi.max(t);
        let y = log_dist(d);
        y_lo = y_lo.min(y);
        y_hi = y_hi.max(y);
    }
    if t_hi <= t_lo {
        t_hi = t_lo + 1.0;
    }
    let (y_lo, mut y_hi) = (y_lo.floor(), y_hi.ceil());
    if y_hi <= y_lo {
        y_hi = y_lo + 1.0;
    }
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let px = |t: f64| LEFT + (t - t_lo) / (t_hi - t_lo) * plot_w;
    let py = |d: f64| TOP + (y_hi - log_dist(d)) / (y_hi - y_lo) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        svg,
        r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );

    // Axes and decade ticks.
    let (x0, x1, y0, y1) = (LEFT, LEFT + plot_w, TOP, TOP + plot_h);
    let _ = writeln!(
        svg,
        r#"<path d="M{x0:.2} {y0:.2} L{x0:.2} {y1:.2} L{x1:.2} {y1:.2}" fill="none" stroke="black"/>"#
    );
    let mut e = y_lo as i32;
    let step = (((y_hi - y_lo) / 8.0).ceil() as i32).max(1);
    while e as f64 <= y_hi {
        let y = py(10f64.powi(e));
        let _ = writeln!(
            svg,
            r##"<line x1="{x0:.2}" y1="{y:.2}" x2="{x1:.2}" y2="{y:.2}" stroke="#dddddd"/>"##
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">1e{e}</text>"#,
            x0 - 6.0,
            y + 4.0
        );
        e += step;
    }
    for i in 0..=4 {
        let t = t_lo + (t_hi - t_lo) * i as f64 / 4.0;
        let x = px(t);
        let _ = writeln!(
            svg,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            y1 + 18.0,
            t.round()
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">iteration</text>"#,
        x0 + plot_w / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">dist (log10)</text>"#,
        y0 + plot_h / 2.0,
        y0 + plot_h / 2.0
    );

    let polyline = |points: &[(f64, f64)], color: &str, width: f64| {
        let coords: Vec<String> = points
            .iter()
            .map(|&(t, d)| format!("{:.2},{:.2}", px(t), py(d)))
            .collect();
        format!(
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="{width}"/>"#,
            coords.join(" ")
        )
    };

    let mut legend = Vec::new();
    for (idx, (trial, points)) in series.iter().enumerate() {
        if points.is_empty() {
            continue;
        }
        let color = PALETTE[idx % PALETTE.len()];
        let _ = writeln!(svg, "{}", polyline(points, color, 1.2));
        legend.push((format!("trial {trial}"), color, 1.2));
    }
    if series.len() > 1 {
        let _ = writeln!(svg, "{}", polyline(&mean_series(&series), "black", 3.0));
        legend.push(("mean".to_string(), "black", 3.0));
    }

    for (i, (label, color, width)) in legend.iter().enumerate() {
        let y = TOP + 10.0 + 18.0 * i as f64;
        let lx = WIDTH - RIGHT + 15.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{color}" stroke-width="{width}"/>"#,
            lx + 20.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}">{label}</text>"#,
            lx + 26.0,
            y + 4.0
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Read a trajectory CSV and write its plot.
pub fn emit_plot(csv_path: impl AsRef<Path>, out_path: impl AsRef<Path>) -> Result<()> {
    let csv = std::fs::read_to_string(csv_path)?;
    std::fs::write(out_path, render_svg(&csv)?)?;
    Ok(())
}
