//! Parameter sweeps over a scenario template.
//!
//! A grid is a list of axes, each a dotted key into the scenario document and
//! the values it takes. Every combination is run once; runs that fail are
//! recorded as rows with their error and the sweep carries on.

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use super::report::{write_run, Report};
use super::scenario::Scenario;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub key: String,
    pub values: Vec<Value>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    #[serde(default, rename = "axis")]
    pub axes: Vec<Axis>,
}

impl Grid {
    /// Reads `[[axis]]` tables with `key` and `values`.
    pub fn from_toml(text: &str) -> Result<Grid> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Parses `key=[v1, v2, ...]` where the right-hand side is a TOML array.
    pub fn parse_axis(spec: &str) -> Result<Axis> {
        let (key, values) = spec
            .split_once('=')
            .ok_or_else(|| Error::input(format!("axis {spec:?} is not of the form key=[values]")))?;
        let doc: Table = format!("v = {}", values.trim())
            .parse()
            .map_err(|e: toml::de::Error| Error::Parse(format!("axis {key}: {e}")))?;
        match doc.get("v") {
            Some(Value::Array(values)) => Ok(Axis {
                key: key.trim().to_string(),
                values: values.clone(),
            }),
            _ => Err(Error::input(format!("axis {key}: values must be a TOML array"))),
        }
    }

    /// Every combination of axis values, first axis slowest. A grid without
    /// axes, or with an empty axis, has no points.
    pub fn points(&self) -> Vec<Vec<(String, Value)>> {
        if self.axes.is_empty() {
            return Vec::new();
        }
        let mut points = vec![Vec::new()];
        for axis in &self.axes {
            points = points
                .into_iter()
                .flat_map(|p: Vec<(String, Value)>| {
                    axis.values.iter().map(move |v| {
                        let mut q = p.clone();
                        q.push((axis.key.clone(), v.clone()));
                        q
                    })
                })
                .collect();
        }
        points
    }
}

/// Sets `a.b.c = value`, creating intermediate tables.
pub fn set_dotted(doc: &mut Table, key: &str, value: Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    let (last, path) = parts.split_last().expect("split yields at least one part");
    let mut table = doc;
    for part in path {
        let entry = table.entry(part.to_string()).or_insert_with(|| Value::Table(Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::input(format!("axis {key}: {part} is not a table")))?;
    }
    if last.is_empty() {
        return Err(Error::input(format!("axis {key:?} has an empty component")));
    }
    table.insert(last.to_string(), value);
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Ok,
    Invalid,
    Diverged,
    Failed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub index: usize,
    pub point: Vec<(String, Value)>,
    pub status: RunStatus,
    pub report: Option<Report>,
    pub error: Option<String>,
}

/// Compact single-line rendering of a TOML value.
fn render(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Table(t) => {
            let items: Vec<String> = t.iter().map(|(k, v)| format!("{k} = {}", render_inline(v))).collect();
            format!("{{ {} }}", items.join(", "))
        }
        other => render_inline(other),
    }
}

fn render_inline(v: &Value) -> String {
    match v {
        Value::Table(_) => render(v),
        Value::Array(items) => format!("[{}]", items.iter().map(render_inline).collect::<Vec<_>>().join(", ")),
        other => other.to_string(),
    }
}

fn run_point(template: &Table, base_dir: &Path, index: usize, point: &[(String, Value)], traces: Option<&Path>) -> SweepRow {
    let mut row = SweepRow {
        index,
        point: point.to_vec(),
        status: RunStatus::Ok,
        report: None,
        error: None,
    };
    let attempt = || -> Result<Report> {
        let mut doc = template.clone();
        for (key, value) in point {
            set_dotted(&mut doc, key, value.clone())?;
        }
        let text = toml::to_string(&doc).map_err(|e| Error::Parse(e.to_string()))?;
        let mut exp = Scenario::from_toml(&text)?.build(base_dir)?;
        exp.name = format!("{}-{index:04}", exp.name);
        let trace = exp.run()?;
        let report = Report::compute(&exp, &trace)?;
        if let Some(dir) = traces {
            write_run(&dir.join(format!("run-{index:04}")), &trace, Some(&report))?;
        }
        Ok(report)
    };
    match attempt() {
        Ok(report) => row.report = Some(report),
        Err(e) => {
            row.status = match e {
                Error::Diverged { .. } | Error::NonFinite { .. } => RunStatus::Diverged,
                Error::Io { .. } => RunStatus::Failed,
                _ => RunStatus::Invalid,
            };
            row.error = Some(e.to_string());
        }
    }
    row
}

/// Runs every grid point in parallel. Rows come back in grid order. With
/// `traces`, each run also writes its files to `traces/run-NNNN`.
pub fn run_sweep(template: &Table, base_dir: &Path, grid: &Grid, traces: Option<PathBuf>) -> Vec<SweepRow> {
    let points = grid.points();
    points
        .par_iter()
        .enumerate()
        .map(|(i, p)| run_point(template, base_dir, i, p, traces.as_deref()))
        .collect()
}

/// Writes the summary table: one row per run with the axis values and the
/// main verdicts.
pub fn write_table<W: Write>(grid: &Grid, rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Parse(e.to_string());
    let mut header = vec!["run".to_string()];
    header.extend(grid.axes.iter().map(|a| a.key.clone()));
    header.extend(
        [
            "status",
            "consensus",
            "value",
            "final_spread",
            "safety",
            "interval_lo",
            "interval_hi",
            "clusters",
            "slope",
            "r_squared",
            "error",
        ]
        .map(String::from),
    );
    w.write_record(&header).map_err(csv_err)?;
    for row in rows {
        let mut rec = vec![row.index.to_string()];
        rec.extend(row.point.iter().map(|(_, v)| render(v)));
        let status = serde_json::to_value(row.status).map_err(|e| Error::Parse(e.to_string()))?;
        rec.push(status.as_str().unwrap_or_default().to_string());
        match &row.report {
            Some(r) => rec.extend([
                r.consensus.achieved.to_string(),
                r.consensus.value.map(|v| format!("{v:.6}")).unwrap_or_default(),
                format!("{:.6e}", r.consensus.final_spread),
                r.safety.holds.to_string(),
                format!("{:.4}", r.interval.lo),
                format!("{:.4}", r.interval.hi),
                r.clusters.len().to_string(),
                format!("{:.6e}", r.rate.slope),
                format!("{:.4}", r.rate.r_squared),
                String::new(),
            ]),
            None => {
                rec.extend(std::iter::repeat_n(String::new(), 9));
                rec.push(row.error.clone().unwrap_or_default());
            }
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Parse(e.to_string()))?;
    Ok(())
}
