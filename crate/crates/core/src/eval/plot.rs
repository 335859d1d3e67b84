//! Deterministic SVG line charts.
//!
//! The plot area carries its data ranges and pixel bounds as `data-*`
//! attributes so charts can be checked without rasterizing them.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::trainer::TrainLog;

use super::EvalReport;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 610.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 350.0;
/// Fraction of the data span added on each side of an axis.
pub const MARGIN: f64 = 0.05;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

/// Axis range covering `[min, max]` plus the margin. A degenerate range is
/// widened by 5% of its magnitude (or by 1 around zero).
pub fn axis_range(min: f64, max: f64) -> (f64, f64) {
    let span = max - min;
    let pad = if span > 0.0 {
        span * MARGIN
    } else if min != 0.0 {
        min.abs() * MARGIN
    } else {
        1.0
    };
    (min - pad, max + pad)
}

fn extent(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    values.fold(None, |acc, v| match acc {
        None => Some((v, v)),
        Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
    })
}

impl Chart {
    fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.series
            .iter()
            .flat_map(|s| s.points.iter().copied())
            .filter(|(x, y)| x.is_finite() && y.is_finite())
    }

    pub fn to_svg(&self) -> Result<String> {
        let (x_min, x_max) = extent(self.points().map(|p| p.0))
            .ok_or_else(|| Error::Contract("nothing to plot: no finite points".into()))?;
        let (y_min, y_max) = extent(self.points().map(|p| p.1)).expect("non-empty");
        let (x0, x1) = axis_range(x_min, x_max);
        let (y0, y1) = axis_range(y_min, y_max);
        let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * (RIGHT - LEFT);
        let py = |y: f64| BOTTOM - (y - y0) / (y1 - y0) * (BOTTOM - TOP);

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="18" text-anchor="middle" font-size="13">{}</text>"#,
            (LEFT + RIGHT) / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            s,
            r#"<g id="plot" data-x-min="{x0}" data-x-max="{x1}" data-y-min="{y0}" data-y-max="{y1}" data-left="{LEFT}" data-right="{RIGHT}" data-top="{TOP}" data-bottom="{BOTTOM}">"#
        );
        let _ = writeln!(
            s,
            r#"<rect x="{LEFT}" y="{TOP}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            RIGHT - LEFT,
            BOTTOM - TOP
        );
        for i in 0..=4 {
            let t = i as f64 / 4.0;
            let (xv, yv) = (x0 + t * (x1 - x0), y0 + t * (y1 - y0));
            let _ = writeln!(
                s,
                r#"<text x="{:.3}" y="{}" text-anchor="middle">{}</text>"#,
                px(xv),
                BOTTOM + 16.0,
                tick(xv)
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{:.3}" text-anchor="end">{}</text>"#,
                LEFT - 6.0,
                py(yv) + 4.0,
                tick(yv)
            );
        }
        for (k, series) in self.series.iter().enumerate() {
            let color = COLORS[k % COLORS.len()];
            let pts: Vec<(f64, f64)> = series
                .points
                .iter()
                .copied()
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .collect();
            let _ = writeln!(s, r#"<g class="series" data-label="{}">"#, escape(&series.label));
            if pts.len() > 1 {
                let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.3},{:.3}", px(x), py(y))).collect();
                let _ = writeln!(
                    s,
                    r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                    path.join(" ")
                );
            }
            for &(x, y) in &pts {
                let _ = writeln!(
                    s,
                    r#"<circle cx="{:.3}" cy="{:.3}" r="2.5" fill="{color}" data-x="{x}" data-y="{y}"/>"#,
                    px(x),
                    py(y)
                );
            }
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
                RIGHT - 120.0,
                TOP + 16.0 + 14.0 * k as f64,
                escape(&series.label)
            );
            s.push_str("</g>\n");
        }
        s.push_str("</g>\n");
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            (LEFT + RIGHT) / 2.0,
            HEIGHT - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
            (TOP + BOTTOM) / 2.0,
            (TOP + BOTTOM) / 2.0,
            escape(&self.y_label)
        );
        s.push_str("</svg>\n");
        Ok(s)
    }
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-3 || v.abs() >= 1e5) {
        format!("{v:.2e}")
    } else {
        format!("{v:.4}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

pub fn train_log_chart(log: &TrainLog) -> Chart {
    let series = |label: &str, f: fn(&crate::trainer::EpochRecord) -> f64| Series {
        label: label.to_string(),
        points: log.records.iter().map(|r| (r.epoch as f64, f(r))).collect(),
    };
    Chart {
        title: "Training and validation loss".into(),
        x_label: "epoch".into(),
        y_label: "loss".into(),
        series: vec![series("train loss", |r| r.train_loss), series("validation loss", |r| r.val_loss)],
    }
}

/// NMSE against alpha, one series per strategy in order of appearance.
pub fn report_chart(report: &EvalReport) -> Chart {
    let mut series: Vec<Series> = Vec::new();
    for r in &report.rows {
        let label = format!("{} eta={}", r.strategy, r.eta);
        let idx = match series.iter().position(|s| s.label == label) {
            Some(i) => i,
            None => {
                series.push(Series { label, points: Vec::new() });
                series.len() - 1
            }
        };
        series[idx].points.push((r.alpha, r.nmse_db));
    }
    Chart {
        title: "NMSE versus alpha".into(),
        x_label: "alpha".into(),
        y_label: "NMSE (dB)".into(),
        series,
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn csv_sibling(svg: &Path) -> PathBuf {
    svg.with_extension("csv")
}

/// Writes `path` (SVG) and the raw log next to it with a `.csv` extension.
pub fn emit_train_plot(log: &TrainLog, path: impl AsRef<Path>) -> Result<PathBuf> {
    if log.records.is_empty() {
        return Err(Error::Contract("cannot plot an empty training log".into()));
    }
    let path = path.as_ref();
    write(path, &train_log_chart(log).to_svg()?)?;
    let csv = csv_sibling(path);
    write(&csv, &log.to_csv())?;
    Ok(csv)
}

/// Writes `path` (SVG) and the raw report next to it with a `.csv` extension.
pub fn emit_report_plot(report: &EvalReport, path: impl AsRef<Path>) -> Result<PathBuf> {
    if report.rows.is_empty() {
        return Err(Error::Contract("cannot plot an empty report".into()));
    }
    let path = path.as_ref();
    write(path, &report_chart(report).to_svg()?)?;
    let csv = csv_sibling(path);
    write(&csv, &report.to_csv())?;
    Ok(csv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_ranges() {
        assert_eq!(axis_range(0.0, 10.0), (-0.5, 10.5));
        assert_eq!(axis_range(2.0, 2.0), (1.9, 2.1));
        assert_eq!(axis_range(0.0, 0.0), (-1.0, 1.0));
    }

    #[test]
    fn empty_chart_is_an_error() {
        let c = Chart {
            title: String::new(),
            x_label: String::new(),
            y_label: String::new(),
            series: vec![Series { label: "x".into(), points: vec![(0.0, f64::NEG_INFINITY)] }],
        };
        assert!(c.to_svg().is_err());
    }
}
