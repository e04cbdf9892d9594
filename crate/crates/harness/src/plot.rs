//! Self-contained SVG reward curves.
//!
//! Every curve is a `<polyline class="series" data-series="…">`, so a figure
//! can be checked mechanically for the series it claims to show.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::metrics::MetricsTable;
use crate::{io_err, Result};

const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

const PANEL_W: f64 = 560.0;
const PANEL_H: f64 = 320.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 36.0;
const MARGIN_B: f64 = 48.0;
const TITLE_H: f64 = 44.0;
const LEGEND_W: f64 = 260.0;

/// Centered moving average; windows shrink at the ends of the series.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let left = (window - 1) / 2;
    let right = window / 2;
    let n = values.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(left);
            let hi = (i + right + 1).min(n);
            let centre = values[i];
            // averaging offsets from the centre keeps constant runs exact
            let offset: f64 = values[lo..hi].iter().map(|v| v - centre).sum();
            centre + offset / (hi - lo) as f64
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub title: String,
    pub series: Vec<Series>,
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
        .replace('\'', "&apos;")
}

fn nice_step(span: f64) -> f64 {
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let nice = if norm < 1.5 {
        1.0
    } else if norm < 3.0 {
        2.0
    } else if norm < 7.0 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let step = nice_step(hi - lo);
    if !(step.is_finite() && step > 0.0) {
        return vec![lo, hi];
    }
    let first = (lo / step - 1e-9).ceil() as i64;
    let last = (hi / step + 1e-9).floor() as i64;
    (first..=last)
        .map(|k| if k == 0 { 0.0 } else { k as f64 * step })
        .collect()
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if lo == hi {
        (lo - 1.0, hi + 1.0)
    } else {
        (lo, hi)
    }
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

/// Renders a grid of line-chart panels with a shared legend.
pub fn render_svg(title: &str, x_label: &str, y_label: &str, panels: &[Panel], columns: usize) -> String {
    let columns = columns.clamp(1, panels.len().max(1));
    let rows = panels.len().div_ceil(columns).max(1);
    let width = columns as f64 * PANEL_W + LEGEND_W;
    let height = TITLE_H + rows as f64 * PANEL_H;

    let mut colors: BTreeMap<&str, &str> = BTreeMap::new();
    let mut legend: Vec<&str> = Vec::new();
    for s in panels.iter().flat_map(|p| &p.series) {
        if !colors.contains_key(s.name.as_str()) {
            colors.insert(&s.name, PALETTE[legend.len() % PALETTE.len()]);
            legend.push(&s.name);
        }
    }

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<title>{}</title>"#, escape(title));
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="28" text-anchor="middle" font-size="18" font-weight="bold">{}</text>"#,
        (width - LEGEND_W) / 2.0,
        escape(title)
    );

    for (idx, panel) in panels.iter().enumerate() {
        let ox = (idx % columns) as f64 * PANEL_W;
        let oy = TITLE_H + (idx / columns) as f64 * PANEL_H;
        let (x0, y0) = (ox + MARGIN_L, oy + MARGIN_T);
        let (pw, ph) = (PANEL_W - MARGIN_L - MARGIN_R, PANEL_H - MARGIN_T - MARGIN_B);
        let (xlo, xhi) = bounds(panel.series.iter().flat_map(|s| s.x.iter().copied()));
        let (ylo, yhi) = bounds(panel.series.iter().flat_map(|s| s.y.iter().copied()));
        let sx = |x: f64| x0 + (x - xlo) / (xhi - xlo) * pw;
        let sy = |y: f64| y0 + ph - (y - ylo) / (yhi - ylo) * ph;

        let _ = writeln!(svg, r#"<g class="panel">"#);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="14">{}</text>"#,
            x0 + pw / 2.0,
            oy + 22.0,
            escape(&panel.title)
        );
        for t in ticks(ylo, yhi) {
            let y = sy(t);
            let _ = writeln!(
                svg,
                r##"<line x1="{x0}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#e5e5e5"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
                x0 + pw,
                x0 - 6.0,
                y + 4.0,
                fmt_tick(t)
            );
        }
        for t in ticks(xlo, xhi) {
            let x = sx(t);
            let _ = writeln!(
                svg,
                r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#333"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
                y0 + ph,
                y0 + ph + 5.0,
                y0 + ph + 18.0,
                fmt_tick(t)
            );
        }
        let _ = writeln!(
            svg,
            r##"<rect class="axes" x="{x0}" y="{y0}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>"##
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            x0 + pw / 2.0,
            y0 + ph + 38.0,
            escape(x_label)
        );
        let _ = writeln!(
            svg,
            r#"<text transform="translate({:.2},{:.2}) rotate(-90)" text-anchor="middle">{}</text>"#,
            ox + 18.0,
            y0 + ph / 2.0,
            escape(y_label)
        );
        for s in &panel.series {
            let points: Vec<String> = s
                .x
                .iter()
                .zip(&s.y)
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .map(|(&x, &y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                .collect();
            let _ = writeln!(
                svg,
                r#"<polyline class="series" data-series="{}" fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
                escape(&s.name),
                colors[s.name.as_str()],
                points.join(" ")
            );
        }
        let _ = writeln!(svg, "</g>");
    }

    let lx = columns as f64 * PANEL_W + 10.0;
    let _ = writeln!(svg, r#"<g class="legend">"#);
    for (i, name) in legend.iter().enumerate() {
        let y = TITLE_H + MARGIN_T + i as f64 * 20.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{y}" x2="{}" y2="{y}" stroke="{}" stroke-width="3"/><text x="{}" y="{}">{}</text>"#,
            lx + 24.0,
            colors[name],
            lx + 30.0,
            y + 4.0,
            escape(name)
        );
    }
    let _ = writeln!(svg, "</g>\n</svg>");
    svg
}

/// `<parent dir>/<file stem>`, e.g. `variant/metrics_3`.
pub fn run_label(path: &Path) -> String {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    match path.parent().and_then(|p| p.file_name()) {
        Some(parent) => format!("{}/{stem}", parent.to_string_lossy()),
        None => stem,
    }
}

fn file_safe(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' })
        .collect()
}

fn smoothed(table: &MetricsTable, column: &str, window: usize) -> Series {
    Series {
        name: column.to_string(),
        x: table.column("episode").unwrap_or_default(),
        y: moving_average(&table.column(column).unwrap_or_default(), window),
    }
}

/// Writes the reward-curve figures for a set of metrics CSVs:
/// `total_<run>.svg` per run, `teams.svg` overlaying every run's team curves,
/// and `red_agents.svg` with one panel per red agent.
pub fn emit_plots(csv_paths: &[PathBuf], window: usize, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let tables = csv_paths
        .iter()
        .map(|p| Ok((run_label(p), MetricsTable::read(p)?)))
        .collect::<Result<Vec<_>>>()?;
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut written = Vec::new();
    let mut write = |name: String, svg: String| -> Result<()> {
        let path = out_dir.join(name);
        std::fs::write(&path, svg).map_err(io_err(&path))?;
        written.push(path);
        Ok(())
    };

    for (label, table) in &tables {
        let mut s = smoothed(table, "total", window);
        s.name = format!("{label} total");
        let panel = Panel {
            title: label.clone(),
            series: vec![s],
        };
        write(
            format!("total_{}.svg", file_safe(label)),
            render_svg(
                &format!("Total reward of all agents ({label}, window {window})"),
                "episode",
                "episodic reward",
                &[panel],
                1,
            ),
        )?;
    }

    let team_series = |column: &str| -> Vec<Series> {
        tables
            .iter()
            .map(|(label, t)| {
                let mut s = smoothed(t, column, window);
                s.name = format!("{label} {column}");
                s
            })
            .collect()
    };
    let teams = [
        Panel { title: "red team".into(), series: team_series("red_team") },
        Panel { title: "green team".into(), series: team_series("green_team") },
    ];
    write(
        "teams.svg".into(),
        render_svg(
            &format!("Team reward (window {window})"),
            "episode",
            "episodic team reward",
            &teams,
            2,
        ),
    )?;

    let mut red_names: Vec<&str> = Vec::new();
    for (_, t) in &tables {
        for n in t.red_agents() {
            if !red_names.contains(&n) {
                red_names.push(n);
            }
        }
    }
    if !red_names.is_empty() {
        let panels: Vec<Panel> = red_names
            .iter()
            .map(|&agent| Panel {
                title: agent.to_string(),
                series: tables
                    .iter()
                    .filter(|(_, t)| t.agent_names.iter().any(|a| a == agent))
                    .map(|(label, t)| {
                        let mut s = smoothed(t, agent, window);
                        s.name = label.clone();
                        s
                    })
                    .collect(),
            })
            .collect();
        write(
            "red_agents.svg".into(),
            render_svg(
                &format!("Reward of each red agent (window {window})"),
                "episode",
                "episodic reward",
                &panels,
                2,
            ),
        )?;
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_one_is_identity() {
        let v = vec![3.0, -1.0, 0.25, 8.0];
        assert_eq!(moving_average(&v, 1), v);
    }

    #[test]
    fn constant_stays_constant() {
        let v = vec![0.1; 37];
        for w in [1, 2, 5, 100] {
            assert!(moving_average(&v, w).iter().all(|&x| x == 0.1));
        }
    }

    #[test]
    fn centered_window_values() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        // window 3: ends shrink to two samples
        assert_eq!(moving_average(&v, 3), vec![1.5, 2.0, 3.0, 4.0, 4.5]);
    }

    #[test]
    fn ticks_cover_range() {
        let t = ticks(-3.2, 47.0);
        assert_eq!(t.first(), Some(&0.0));
        assert_eq!(t.last(), Some(&40.0));
        assert_eq!(fmt_tick(-0.0), "0");
        assert_eq!(fmt_tick(2.5), "2.5");
    }

    #[test]
    fn labels_escape() {
        let svg = render_svg(
            "a < b & c",
            "x",
            "y",
            &[Panel {
                title: "p".into(),
                series: vec![Series { name: "\"q\"".into(), x: vec![0.0, 1.0], y: vec![1.0, 1.0] }],
            }],
            1,
        );
        assert!(svg.contains("a &lt; b &amp; c"));
        assert!(svg.contains("data-series=\"&quot;q&quot;\""));
    }
}
