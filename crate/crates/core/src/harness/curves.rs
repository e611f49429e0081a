//! Learning-curve CSVs, cross-run aggregation and an SVG plot.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::HarnessError;
use crate::stats::{trailing_means, MeanSe};
use crate::trainer::CurveRecord;

pub const SMOOTHING_WINDOW: usize = 1000;
pub const GRID_STRIDE: usize = 100;

/// One row of a per-run curve; `trial` counts completed trials (from 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub trial: usize,
    pub reward: f64,
    pub trailing_mean: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub trial: usize,
    pub mean: f64,
    pub se: f64,
}

pub fn curve_rows(records: &[CurveRecord], window: usize) -> Vec<CurveRow> {
    let rewards: Vec<f64> = records.iter().map(|r| r.reward).collect();
    records
        .iter()
        .zip(trailing_means(&rewards, window))
        .map(|(r, m)| CurveRow {
            trial: r.trial + 1,
            reward: r.reward,
            trailing_mean: m,
        })
        .collect()
}

fn csv_writer(path: &Path, header: &[&str]) -> Result<csv::Writer<fs::File>, HarnessError> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?;
    w.write_record(header)?;
    Ok(w)
}

pub fn write_curve_csv(path: &Path, rows: &[CurveRow]) -> Result<(), HarnessError> {
    let mut w = csv_writer(path, &["trial", "reward", "trailing_mean"])?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))?;
    Ok(())
}

pub fn read_curve_csv(path: &Path) -> Result<Vec<CurveRow>, HarnessError> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize().collect::<Result<Vec<CurveRow>, _>>()?;
    Ok(rows)
}

/// Value of a step function sampled at `(x_i, y_i)` (sorted by `x`) at `x`:
/// the last `y_i` with `x_i <= x`, or `None` before the first sample.
pub fn step_value(xs: &[usize], ys: &[f64], x: usize) -> Option<f64> {
    let k = xs.partition_point(|&xi| xi <= x);
    (k > 0).then(|| ys[k - 1])
}

/// Mean and standard error across runs on a common grid.
///
/// Each run's rewards are smoothed with a trailing window, then sampled on
/// `stride, 2*stride, ...` up to the longest run by step-function
/// interpolation (a finished run holds its last value).
pub fn aggregate_with(
    runs: &[Vec<CurveRow>],
    stride: usize,
    window: usize,
) -> Result<Vec<AggregateRow>, HarnessError> {
    if runs.is_empty() || runs.iter().all(|r| r.is_empty()) {
        return Err(HarnessError::NoRuns);
    }
    let smoothed: Vec<(Vec<usize>, Vec<f64>)> = runs
        .iter()
        .map(|rows| {
            let rewards: Vec<f64> = rows.iter().map(|r| r.reward).collect();
            (
                rows.iter().map(|r| r.trial).collect(),
                trailing_means(&rewards, window),
            )
        })
        .collect();
    let last = runs
        .iter()
        .filter_map(|r| r.last().map(|x| x.trial))
        .max()
        .unwrap_or(0);
    let mut out = Vec::new();
    let mut g = stride;
    while g <= last {
        let vals: Vec<f64> = smoothed
            .iter()
            .filter_map(|(xs, ys)| step_value(xs, ys, g))
            .collect();
        if !vals.is_empty() {
            let s = MeanSe::from_samples(&vals);
            out.push(AggregateRow {
                trial: g,
                mean: s.mean,
                se: s.se,
            });
        }
        g += stride;
    }
    Ok(out)
}

pub fn aggregate(runs: &[Vec<CurveRow>]) -> Result<Vec<AggregateRow>, HarnessError> {
    aggregate_with(runs, GRID_STRIDE, SMOOTHING_WINDOW)
}

pub fn write_aggregate_csv(path: &Path, rows: &[AggregateRow]) -> Result<(), HarnessError> {
    let mut w = csv_writer(path, &["trial", "mean", "se"])?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))?;
    Ok(())
}

/// Line plot of the mean with a shaded ±SE band.
pub fn render_svg(rows: &[AggregateRow], title: &str) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const M: f64 = 50.0;
    let x_max = rows.last().map_or(1, |r| r.trial).max(1) as f64;
    let (mut lo, mut hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), r| {
        (l.min(r.mean - r.se), h.max(r.mean + r.se))
    });
    if !lo.is_finite() || hi - lo < 1e-12 {
        lo = if lo.is_finite() { lo - 0.5 } else { 0.0 };
        hi = lo + 1.0;
    }
    let px = |t: usize| M + (W - 2.0 * M) * t as f64 / x_max;
    let py = |v: f64| H - M - (H - 2.0 * M) * (v - lo) / (hi - lo);

    let mut band = String::new();
    for r in rows {
        let _ = write!(band, "{:.2},{:.2} ", px(r.trial), py(r.mean + r.se));
    }
    for r in rows.iter().rev() {
        let _ = write!(band, "{:.2},{:.2} ", px(r.trial), py(r.mean - r.se));
    }
    let line: String = rows
        .iter()
        .map(|r| format!("{:.2},{:.2}", px(r.trial), py(r.mean)))
        .collect::<Vec<_>>()
        .join(" ");

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{M}" y="30" font-family="sans-serif" font-size="14">{}</text>"#,
        escape_xml(title)
    );
    let _ = writeln!(
        s,
        r#"<polyline points="{m},{b} {r},{b}" stroke="black" fill="none"/>"#,
        m = M,
        b = H - M,
        r = W - M
    );
    let _ = writeln!(
        s,
        r#"<polyline points="{m},{t} {m},{b}" stroke="black" fill="none"/>"#,
        m = M,
        t = M,
        b = H - M
    );
    for (v, y) in [(lo, H - M), (hi, M)] {
        let _ = writeln!(
            s,
            r#"<text x="4" y="{y:.2}" font-family="sans-serif" font-size="11">{v:.3}</text>"#
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{x:.2}" y="{y:.2}" font-family="sans-serif" font-size="11" text-anchor="end">{t} trials</text>"#,
        x = W - M,
        y = H - M + 20.0,
        t = x_max as usize
    );
    let _ = writeln!(
        s,
        r##"<polygon points="{}" fill="#1f77b4" fill-opacity="0.25" stroke="none"/>"##,
        band.trim_end()
    );
    let _ = writeln!(
        s,
        r##"<polyline points="{line}" fill="none" stroke="#1f77b4" stroke-width="1.5"/>"##
    );
    s.push_str("</svg>\n");
    s
}

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn write_svg(path: &Path, rows: &[AggregateRow], title: &str) -> Result<(), HarnessError> {
    fs::write(path, render_svg(rows, title)).map_err(|e| HarnessError::io(path, e))
}
