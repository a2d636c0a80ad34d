//! Static SVG line plots of a run directory.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::path::{Path, PathBuf};

use popowicz::io::{read_columns, DIAGNOSTICS_COLUMNS};

use crate::error::{CliError, CliResult};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

pub struct Series {
    pub label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo <= 1e-300_f64.max(1e-12 * hi.abs().max(lo.abs())) {
        let pad = if lo == 0.0 { 1.0 } else { 0.5 * lo.abs() };
        return (lo - pad, hi + pad);
    }
    (lo, hi)
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders a line plot. A series with one point is drawn as a marker.
pub fn line_plot(title: &str, x_label: &str, series: &[Series]) -> String {
    let (x0, x1) = bounds(series.iter().flat_map(|s| s.x.iter().copied()));
    let (y0, y1) = bounds(series.iter().flat_map(|s| s.y.iter().copied()));
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="30" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let small = r#"font-family="sans-serif" font-size="11""#;
    let _ = writeln!(svg, r#"<text x="{MARGIN}" y="{}" {small}>{x0:.6e}</text>"#, HEIGHT - MARGIN + 16.0);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="end" {small}>{x1:.6e}</text>"#,
        WIDTH - MARGIN,
        HEIGHT - MARGIN + 16.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle" {small}>{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 20.0,
        escape(x_label)
    );
    let _ = writeln!(svg, r#"<text x="4" y="{}" {small}>{y1:.6e}</text>"#, MARGIN - 4.0);
    let _ = writeln!(svg, r#"<text x="4" y="{}" {small}>{y0:.6e}</text>"#, HEIGHT - MARGIN + 30.0);

    for (k, s) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let points: Vec<(f64, f64)> = s
            .x
            .iter()
            .zip(&s.y)
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|(&x, &y)| (px(x), py(y)))
            .collect();
        if points.len() == 1 {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.3}" cy="{:.3}" r="3" fill="{color}"/>"#,
                points[0].0, points[0].1
            );
        } else if !points.is_empty() {
            let mut coords = String::new();
            for (x, y) in &points {
                let _ = write!(coords, "{x:.3},{y:.3} ");
            }
            let _ = writeln!(
                svg,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                coords.trim_end()
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" fill="{color}" {small}>{}</text>"#,
            WIDTH - MARGIN + 4.0,
            MARGIN + 14.0 * (k as f64 + 1.0),
            escape(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn read_table(path: &Path) -> CliResult<Vec<(String, Vec<f64>)>> {
    let file = File::open(path).map_err(CliError::io(format!("opening {}", path.display())))?;
    Ok(read_columns(file)?)
}

fn column<'a>(table: &'a [(String, Vec<f64>)], name: &str, file: &Path) -> CliResult<&'a [f64]> {
    table
        .iter()
        .find(|(h, _)| h == name)
        .map(|(_, v)| v.as_slice())
        .ok_or_else(|| CliError::Data(format!("{} has no column '{name}'", file.display())))
}

fn save(dir: &Path, name: &str, svg: String) -> CliResult<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, svg).map_err(CliError::io(format!("writing {}", path.display())))?;
    Ok(path)
}

/// Writes one SVG per diagnostics column, `drift.svg` and, when snapshots are
/// present, `profiles.svg`. Returns the files written.
pub fn emit_plots(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let diag_path = dir.join("diagnostics.csv");
    let table = read_table(&diag_path)?;
    let t = column(&table, "t", &diag_path)?;
    let mut written = Vec::new();
    for name in &DIAGNOSTICS_COLUMNS[1..] {
        let y = column(&table, name, &diag_path)?;
        let s = Series {
            label: name.to_string(),
            x: t.to_vec(),
            y: y.to_vec(),
        };
        written.push(save(dir, &format!("{name}.svg"), line_plot(name, "t", &[s]))?);
    }

    let total = column(&table, "total_momentum", &diag_path)?;
    let drift: Vec<f64> = match total.first() {
        Some(&i0) if i0 != 0.0 => total.iter().map(|i| (i - i0) / i0.abs()).collect(),
        Some(&i0) => total.iter().map(|i| i - i0).collect(),
        None => Vec::new(),
    };
    let s = Series {
        label: "relative drift of int (m + n)".into(),
        x: t.to_vec(),
        y: drift,
    };
    written.push(save(dir, "drift.svg", line_plot("conserved momentum drift", "t", &[s]))?);

    let snap_path = dir.join("snapshots.csv");
    if snap_path.exists() {
        let snaps = read_table(&snap_path)?;
        let (st, sx) = (column(&snaps, "t", &snap_path)?, column(&snaps, "x", &snap_path)?);
        let (su, sv) = (column(&snaps, "u", &snap_path)?, column(&snaps, "v", &snap_path)?);
        let mut times: Vec<f64> = Vec::new();
        for &time in st {
            if times.last() != Some(&time) {
                times.push(time);
            }
        }
        let picks: Vec<f64> = match times.len() {
            0 => Vec::new(),
            1 | 2 => times.clone(),
            n => vec![times[0], times[n / 2], times[n - 1]],
        };
        let mut series = Vec::new();
        for &time in &picks {
            for (name, col) in [("u", su), ("v", sv)] {
                let rows: Vec<usize> = (0..st.len()).filter(|&i| st[i] == time).collect();
                series.push(Series {
                    label: format!("{name} at t = {time:.4}"),
                    x: rows.iter().map(|&i| sx[i]).collect(),
                    y: rows.iter().map(|&i| col[i]).collect(),
                });
            }
        }
        written.push(save(dir, "profiles.svg", line_plot("velocity profiles", "x", &series))?);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_and_empty_series_render() {
        let one = Series {
            label: "a".into(),
            x: vec![0.0],
            y: vec![2.0],
        };
        let svg = line_plot("one", "t", &[one]);
        assert!(svg.contains("<circle"));
        let empty = Series {
            label: "b".into(),
            x: vec![],
            y: vec![],
        };
        assert!(line_plot("none", "t", &[empty]).ends_with("</svg>\n"));
    }

    #[test]
    fn missing_column_is_named() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("diagnostics.csv"), "t,total_momentum\n0,1\n").unwrap();
        let err = emit_plots(dir.path()).unwrap_err().to_string();
        assert!(err.contains("half_line_momentum"), "{err}");
    }

    #[test]
    fn labels_are_escaped() {
        assert!(line_plot("a<b", "t", &[]).contains("a&lt;b"));
    }
}
