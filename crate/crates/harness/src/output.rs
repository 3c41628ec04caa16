//! CSV logs, the checkpoint summary and the SVG chart.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use vac_core::agents::RegretLog;

use crate::experiment::CellResult;

pub fn log_file_name(label: &str, seed: u64) -> String {
    format!("{label}_seed{seed}.csv")
}

/// Writes a log as CSV. Episodic logs have the columns
/// `t,v_star,v_pi,regret_inst,regret_cum,objective,loss,wall_ms`;
/// discounted logs add `samples`.
pub fn write_log_csv(path: &Path, log: &RegretLog) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if log.rows.is_empty() {
        w.write_record(["t", "v_star", "v_pi", "regret_inst", "regret_cum", "objective", "loss", "wall_ms"])?;
    }
    for row in &log.rows {
        w.serialize(row)?;
    }
    w.flush()
}

/// `1, 2, 5, 10, 20, 50, …` up to `t_max`, plus `t_max` itself.
pub fn checkpoints(t_max: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut decade = 1;
    'outer: loop {
        for m in [1, 2, 5] {
            let t = m * decade;
            if t >= t_max {
                break 'outer;
            }
            out.push(t);
        }
        decade *= 10;
    }
    out.push(t_max);
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub agent: String,
    pub t: usize,
    pub mean: f64,
    pub std: f64,
    pub runs: usize,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = if xs.len() > 1 { (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
    (mean, std)
}

/// Mean and sample standard deviation of cumulative regret across seeds,
/// per agent (in first-appearance order) and checkpoint.
pub fn summarize(results: &[CellResult], t_max: usize) -> Vec<SummaryRow> {
    let mut labels: Vec<&str> = Vec::new();
    for r in results {
        if !labels.contains(&r.label.as_str()) {
            labels.push(&r.label);
        }
    }
    let mut rows = Vec::new();
    for label in labels {
        let logs: Vec<&RegretLog> = results.iter().filter(|r| r.label == label).map(|r| r.log()).collect();
        for t in checkpoints(t_max) {
            let values: Vec<f64> = logs.iter().filter_map(|l| l.regret_at(t)).collect();
            if values.is_empty() {
                continue;
            }
            let (mean, std) = mean_std(&values);
            rows.push(SummaryRow { agent: label.to_string(), t, mean, std, runs: values.len() });
        }
    }
    rows
}

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["agent", "t", "mean_regret_cum", "std_regret_cum", "runs"])?;
    for r in rows {
        w.write_record([r.agent.clone(), r.t.to_string(), r.mean.to_string(), r.std.to_string(), r.runs.to_string()])?;
    }
    w.flush()
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// Line chart of mean cumulative regret against `t`, one polyline per
/// agent, drawn from every episode of every seed.
pub fn render_svg(results: &[CellResult], t_max: usize) -> String {
    let (width, height) = (720.0, 440.0);
    let (left, right, top, bottom) = (70.0, 160.0, 30.0, 50.0);
    let (pw, ph) = (width - left - right, height - top - bottom);
    let mut series: Vec<(String, Vec<f64>)> = Vec::new();
    for r in results {
        let log = r.log();
        let idx = match series.iter().position(|(l, _)| *l == r.label) {
            Some(i) => i,
            None => {
                series.push((r.label.clone(), Vec::new()));
                series.len() - 1
            }
        };
        let sums = &mut series[idx].1;
        if sums.is_empty() {
            sums.resize(t_max, 0.0);
        }
        for row in &log.rows {
            sums[row.t - 1] += row.regret_cum;
        }
    }
    for (label, sums) in &mut series {
        let n = results.iter().filter(|r| r.label == *label).count() as f64;
        sums.iter_mut().for_each(|x| *x /= n);
    }
    let y_max = series.iter().flat_map(|(_, s)| s.iter().copied()).fold(0.0f64, f64::max).max(1e-12);
    let x_of = |t: usize| left + pw * t as f64 / t_max as f64;
    let y_of = |v: f64| top + ph * (1.0 - v / y_max);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(svg, r#"<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<line class="axis" x1="{left}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#,
        y0 = top + ph,
        x1 = left + pw
    );
    let _ = writeln!(svg, r#"<line class="axis" x1="{left}" y1="{top}" x2="{left}" y2="{y0}" stroke="black"/>"#, y0 = top + ph);
    for k in 0..=4 {
        let v = y_max * k as f64 / 4.0;
        let t = (t_max as f64 * k as f64 / 4.0).round() as usize;
        let _ = writeln!(
            svg,
            r#"<text x="{x:.1}" y="{y:.1}" font-size="11" text-anchor="end">{v:.3}</text>"#,
            x = left - 6.0,
            y = y_of(v) + 4.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{x:.1}" y="{y:.1}" font-size="11" text-anchor="middle">{t}</text>"#,
            x = x_of(t),
            y = top + ph + 16.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{x:.1}" y="{y:.1}" font-size="12" text-anchor="middle">episode t</text>"#,
        x = left + pw / 2.0,
        y = height - 12.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{y:.1}" font-size="12" text-anchor="middle" transform="rotate(-90 16 {y:.1})">mean cumulative regret</text>"#,
        y = top + ph / 2.0
    );
    for (i, (label, means)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut points = format!("{:.2},{:.2}", x_of(0), y_of(0.0));
        for (k, v) in means.iter().enumerate() {
            let _ = write!(points, " {:.2},{:.2}", x_of(k + 1), y_of(*v));
        }
        let _ = writeln!(
            svg,
            r#"<polyline data-agent="{label}" fill="none" stroke="{color}" stroke-width="1.5" points="{points}"/>"#
        );
        let ly = top + 16.0 * (i as f64 + 1.0);
        let _ = writeln!(
            svg,
            r#"<text x="{x:.1}" y="{ly:.1}" font-size="12" fill="{color}">{label}</text>"#,
            x = left + pw + 12.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Writes every cell's CSV into `dir/runs`, then the summary and chart
/// into `dir` when `complete`.
pub fn write_outputs(dir: &Path, results: &[CellResult], t_max: usize, complete: bool) -> io::Result<()> {
    let runs = dir.join("runs");
    fs::create_dir_all(&runs)?;
    for r in results {
        write_log_csv(&runs.join(log_file_name(&r.label, r.seed)), r.log())?;
    }
    if complete {
        write_summary_csv(&dir.join("summary.csv"), &summarize(results, t_max))?;
        fs::write(dir.join("regret.svg"), render_svg(results, t_max))?;
    }
    Ok(())
}
