//! Aggregate report and its three renderings.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::metrics::{mean_pass_at_k, percent_from_fraction, percent_of};
use super::protocol::{InstanceOutcome, SweepResult};
use crate::error::{Error, Result};
use crate::model::AttemptStatus;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRow {
    pub iteration: u32,
    pub temperature: f64,
    pub instances_run: usize,
    /// Instances resolved by this iteration or an earlier one.
    pub resolved_cumulative: usize,
    /// Runs of this iteration that produced an empty patch.
    pub empty_patches: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeLine {
    pub instance_id: String,
    pub final_attempt_index: u32,
    pub resolved: bool,
    pub patch_empty: bool,
    pub statuses: Vec<AttemptStatus>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetRow {
    pub max_iterations: u32,
    pub resolved: usize,
    pub total: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PassAtKRow {
    pub temperature: f64,
    pub samples: u32,
    /// Mean pass@k over the suite for k = 1..=samples, as fractions.
    pub pass_at_k: Vec<f64>,
}

impl PassAtKRow {
    pub fn from_sweep(sweep: &SweepResult) -> Result<Self> {
        let matrix = sweep.matrix();
        let pass_at_k = (1..=sweep.samples)
            .map(|k| mean_pass_at_k(&matrix, k))
            .collect::<Result<_>>()?;
        Ok(PassAtKRow {
            temperature: sweep.temperature,
            samples: sweep.samples,
            pass_at_k,
        })
    }
}

/// Everything a run reports. Sections that a run does not produce stay
/// empty. Contains no timestamps or durations, so equal runs give equal
/// bytes.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub suite_size: usize,
    #[serde(default)]
    pub resolved: usize,
    #[serde(default)]
    pub iterations: Vec<IterationRow>,
    #[serde(default)]
    pub outcomes: Vec<OutcomeLine>,
    #[serde(default)]
    pub budget_rows: Vec<BudgetRow>,
    #[serde(default)]
    pub pass_at_k: Vec<PassAtKRow>,
}

impl EvalReport {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds the iterative-protocol report. `temperatures` is the schedule
    /// the outcomes were produced under; iterations that ran nothing still
    /// get a row.
    pub fn from_outcomes(outcomes: &[InstanceOutcome], temperatures: &[f64]) -> Self {
        let iterations = temperatures
            .iter()
            .enumerate()
            .map(|(i, &temperature)| {
                let iteration = i as u32 + 1;
                let runs = outcomes
                    .iter()
                    .filter_map(|o| o.attempts.iter().find(|a| a.attempt_index == iteration));
                let (instances_run, empty_patches) =
                    runs.fold((0, 0), |(n, e), a| (n + 1, e + a.patch_empty as usize));
                let resolved_cumulative = outcomes
                    .iter()
                    .filter(|o| {
                        o.attempts
                            .iter()
                            .any(|a| a.attempt_index <= iteration && a.resolved.is_resolved())
                    })
                    .count();
                IterationRow {
                    iteration,
                    temperature,
                    instances_run,
                    resolved_cumulative,
                    empty_patches,
                }
            })
            .collect();
        let lines: Vec<OutcomeLine> = outcomes
            .iter()
            .map(|o| OutcomeLine {
                instance_id: o.instance_id.clone(),
                final_attempt_index: o.final_attempt_index,
                resolved: o.final_resolved,
                patch_empty: o.final_attempt().patch_empty,
                statuses: o.attempts.iter().map(|a| a.status).collect(),
            })
            .collect();
        EvalReport {
            suite_size: outcomes.len(),
            resolved: lines.iter().filter(|l| l.resolved).count(),
            iterations,
            outcomes: lines,
            budget_rows: Vec::new(),
            pass_at_k: Vec::new(),
        }
    }

    /// Builds a sweep report from one result per temperature.
    pub fn from_sweeps(sweeps: &[SweepResult]) -> Result<Self> {
        Ok(EvalReport {
            suite_size: sweeps.first().map_or(0, |s| s.rows.len()),
            pass_at_k: sweeps
                .iter()
                .map(PassAtKRow::from_sweep)
                .collect::<Result<_>>()?,
            ..Default::default()
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RenderFormat {
    Structured,
    Table,
    PlotData,
}

impl FromStr for RenderFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "structured" | "json" => Ok(RenderFormat::Structured),
            "table" | "human" => Ok(RenderFormat::Table),
            "plot" | "plot-data" | "plot_data" => Ok(RenderFormat::PlotData),
            other => Err(Error::Config(format!(
                "unknown report format {other:?}; expected structured, table, or plot-data"
            ))),
        }
    }
}

pub fn render_report(report: &EvalReport, format: RenderFormat) -> Result<Vec<u8>> {
    let text = match format {
        RenderFormat::Structured => {
            let mut s = serde_json::to_string_pretty(report)?;
            s.push('\n');
            s
        }
        RenderFormat::Table => render_tables(report),
        RenderFormat::PlotData => {
            let mut s = serde_json::to_string_pretty(&plot_data(report))?;
            s.push('\n');
            s
        }
    };
    Ok(text.into_bytes())
}

pub fn parse_report(bytes: &[u8]) -> Result<EvalReport> {
    Ok(serde_json::from_slice(bytes)?)
}

/// `T=0.1`, `T=1.0`: always at least one decimal.
pub fn temperature_label(t: f64) -> String {
    if t.fract() == 0.0 {
        format!("T={t:.1}")
    } else {
        format!("T={t}")
    }
}

/// Pipe table with every column padded to its widest cell.
pub fn markdown_table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let mut s = String::from("|");
        for (cell, w) in cells.iter().zip(&widths) {
            let _ = write!(s, " {cell:<w$} |");
        }
        s.push('\n');
        s
    };
    let mut out = line(headers.to_vec());
    out.push('|');
    for w in &widths {
        out.push_str(&"-".repeat(w + 2));
        out.push('|');
    }
    out.push('\n');
    for row in rows {
        out.push_str(&line(row.iter().map(String::as_str).collect()));
    }
    out
}

/// Per-iteration table: instances run, cumulative resolution rate over
/// the suite, and empty-patch rate among that iteration's runs.
pub fn render_iteration_table(report: &EvalReport) -> String {
    let rows: Vec<Vec<String>> = report
        .iterations
        .iter()
        .map(|r| {
            vec![
                r.iteration.to_string(),
                r.instances_run.to_string(),
                percent_of(r.resolved_cumulative, report.suite_size, 1),
                percent_of(r.empty_patches, r.instances_run, 1),
            ]
        })
        .collect();
    markdown_table(
        &[
            "Iteration",
            "Instances Run",
            "Resolution Rate (%)",
            "Empty Patch Rate (%)",
        ],
        &rows,
    )
}

/// Resolve rate per iteration budget, two decimals.
pub fn render_budget_table(report: &EvalReport) -> String {
    let rows: Vec<Vec<String>> = report
        .budget_rows
        .iter()
        .map(|r| {
            vec![
                r.max_iterations.to_string(),
                percent_of(r.resolved, r.total, 2),
            ]
        })
        .collect();
    markdown_table(&["Max Iterations", "Resolve Rate (%)"], &rows)
}

/// One row per temperature, one column per k.
pub fn render_pass_at_k_table(report: &EvalReport) -> String {
    let max_k = report
        .pass_at_k
        .iter()
        .map(|r| r.pass_at_k.len())
        .max()
        .unwrap_or(0);
    let headers: Vec<String> = std::iter::once("Temperature".to_string())
        .chain((1..=max_k).map(|k| format!("Pass@{k}")))
        .collect();
    let rows: Vec<Vec<String>> = report
        .pass_at_k
        .iter()
        .map(|r| {
            let mut row = vec![temperature_label(r.temperature)];
            row.extend(
                r.pass_at_k
                    .iter()
                    .map(|v| format!("{}%", percent_from_fraction(*v, 1))),
            );
            row.resize(max_k + 1, String::new());
            row
        })
        .collect();
    let headers: Vec<&str> = headers.iter().map(String::as_str).collect();
    markdown_table(&headers, &rows)
}

fn render_tables(report: &EvalReport) -> String {
    let mut out = format!("Instances: {}\n", report.suite_size);
    if !report.outcomes.is_empty() {
        let _ = writeln!(
            out,
            "Resolved: {} ({}%)",
            report.resolved,
            percent_of(report.resolved, report.suite_size, 1)
        );
    }
    if !report.iterations.is_empty() {
        out.push_str("\nIterative evaluation\n\n");
        out.push_str(&render_iteration_table(report));
    }
    if !report.budget_rows.is_empty() {
        out.push_str("\nIteration budget\n\n");
        out.push_str(&render_budget_table(report));
    }
    if !report.pass_at_k.is_empty() {
        out.push_str("\nPass@K\n\n");
        out.push_str(&render_pass_at_k_table(report));
    }
    out
}

/// (k, pass@k in percent) series per temperature, tagged for a log-scale
/// k axis.
pub fn plot_data(report: &EvalReport) -> serde_json::Value {
    let series: Vec<serde_json::Value> = report
        .pass_at_k
        .iter()
        .map(|r| {
            let points: Vec<serde_json::Value> = r
                .pass_at_k
                .iter()
                .enumerate()
                .map(|(i, v)| json!({ "k": i + 1, "pass_at_k": v * 100.0 }))
                .collect();
            json!({
                "label": temperature_label(r.temperature),
                "temperature": r.temperature,
                "points": points,
            })
        })
        .collect();
    json!({
        "x": "k",
        "x_scale": "log",
        "y": "pass_at_k",
        "y_unit": "percent",
        "series": series,
    })
}
