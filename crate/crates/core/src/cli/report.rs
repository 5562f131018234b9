//! Per-run reports and output files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::scenario::{Experiment, Mode};
use crate::error::{Error, Result};
use crate::graph::NodeSet;
use crate::metrics::{
    check_consensus, check_safety, envelope_violation, envelopes, fit_log_decay, position_clusters, Cluster,
    ConsensusVerdict, RateEstimate, SafetyCheck, SafetyInterval,
};
use crate::trace::Trace;

/// Envelope slack used when judging monotonicity in reports.
pub const ENVELOPE_SLACK: f64 = 1e-9;

/// Summary of one run. Agent indices are 1-indexed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub name: String,
    pub mode: Mode,
    pub agents: usize,
    pub normal: Vec<usize>,
    pub horizon: usize,
    /// Safety interval over the normal agents.
    pub interval: SafetyInterval,
    /// The same formula evaluated over every agent, malicious ones included.
    pub interval_all_agents: SafetyInterval,
    pub safety: SafetyCheck,
    pub consensus: ConsensusVerdict,
    pub rate: RateEstimate,
    pub clusters: Vec<Cluster>,
    pub envelope_depth: usize,
    pub envelopes_monotone: bool,
    pub envelope_violation_step: Option<usize>,
    pub warnings: Vec<String>,
}

fn one_based(set: &NodeSet) -> Vec<usize> {
    set.iter().map(|i| i + 1).collect()
}

impl Report {
    /// Computes every metric from the trace alone, so a trace read back from
    /// disk gives the same report as the one just simulated.
    pub fn compute(exp: &Experiment, trace: &Trace) -> Result<Report> {
        let normal = exp.normal_agents();
        let all: NodeSet = (0..exp.setup.graph.node_count()).collect();
        let interval = exp.safety_interval()?;
        let interval_all_agents = exp.interval_over(&all)?;
        let mut safety = check_safety(trace, &interval, &normal);
        if let Some(v) = safety.first_violation.as_mut() {
            v.agent += 1;
        }
        let tail = exp.analysis.tail.min(trace.len());
        let consensus = check_consensus(trace, &normal, exp.analysis.tolerance, tail)?;
        let depth = exp.envelope_depth();
        let env = envelopes(trace, &normal, depth);
        let gaps: Vec<f64> = env.iter().map(|(hi, lo)| hi - lo).collect();
        let rate = fit_log_decay(&gaps);
        let violation = envelope_violation(&env, ENVELOPE_SLACK);
        let clusters = position_clusters(&trace.last().positions, &normal, exp.analysis.cluster_gap)
            .into_iter()
            .map(|c| Cluster {
                members: c.members.iter().map(|i| i + 1).collect(),
                center: c.center,
            })
            .collect();
        Ok(Report {
            name: exp.name.clone(),
            mode: exp.mode,
            agents: trace.agents(),
            normal: one_based(&normal),
            horizon: exp.setup.horizon,
            interval,
            interval_all_agents,
            safety,
            consensus,
            rate,
            clusters,
            envelope_depth: depth,
            envelopes_monotone: violation.is_none(),
            envelope_violation_step: violation,
            warnings: exp.warnings.clone(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }

    /// One human-readable line per verdict.
    pub fn summary(&self) -> String {
        let c = &self.consensus;
        let consensus = match (c.achieved, c.value) {
            (true, Some(v)) => format!("reached at {v:.6} (from step {})", c.step_of_convergence.unwrap_or(0)),
            _ => format!("not reached (final spread {:.4e})", c.final_spread),
        };
        let safety = match &self.safety.first_violation {
            None => "holds".to_string(),
            Some(v) => format!("violated by agent {} at step {} (x = {:.4})", v.agent, v.step, v.position),
        };
        let clusters: Vec<String> = self
            .clusters
            .iter()
            .map(|c| format!("{:?} at {:.4}", c.members, c.center))
            .collect();
        format!(
            "{name}: {n} agents, normal {normal:?}, horizon {h}\n\
             interval   [{lo:.4}, {hi:.4}] (all agents [{alo:.4}, {ahi:.4}])\n\
             safety     {safety}\n\
             consensus  {consensus}\n\
             rate       slope {slope:.4e}, r2 {r2:.4}\n\
             clusters   {clusters}\n\
             envelopes  {env}\n",
            name = self.name,
            n = self.agents,
            normal = self.normal,
            h = self.horizon,
            lo = self.interval.lo,
            hi = self.interval.hi,
            alo = self.interval_all_agents.lo,
            ahi = self.interval_all_agents.hi,
            slope = self.rate.slope,
            r2 = self.rate.r_squared,
            clusters = clusters.join(", "),
            env = match self.envelope_violation_step {
                None => "monotone".to_string(),
                Some(k) => format!("not monotone at step {k}"),
            },
        )
    }
}

/// Files written for a run.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub trace: PathBuf,
    pub filters: PathBuf,
    pub report: Option<PathBuf>,
    pub plot: PathBuf,
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes `trace.csv`, `filters.csv` and `plot.py` into `dir`, plus
/// `report.json` when a report is given.
pub fn write_run(dir: &Path, trace: &Trace, report: Option<&Report>) -> Result<RunOutput> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let out = RunOutput {
        dir: dir.to_path_buf(),
        trace: dir.join("trace.csv"),
        filters: dir.join("filters.csv"),
        report: report.map(|_| dir.join("report.json")),
        plot: dir.join("plot.py"),
    };
    let mut buf = Vec::new();
    trace.write_csv(&mut buf)?;
    write(&out.trace, &buf)?;
    buf.clear();
    trace.write_sidecar(&mut buf)?;
    write(&out.filters, &buf)?;
    if let (Some(r), Some(path)) = (report, &out.report) {
        write(path, r.to_json()?.as_bytes())?;
    }
    write(&out.plot, plot_script(report).as_bytes())?;
    Ok(out)
}

/// A matplotlib script that plots position against step for every agent,
/// dashing the malicious ones and shading the safety interval.
pub fn plot_script(report: Option<&Report>) -> String {
    let (normal, lo, hi, title) = match report {
        Some(r) => (
            format!("{:?}", r.normal),
            r.interval.lo.to_string(),
            r.interval.hi.to_string(),
            r.name.clone(),
        ),
        None => ("None".into(), "None".into(), "None".into(), "trace".into()),
    };
    format!(
        r#"#!/usr/bin/env python3
# Usage: python3 plot.py [trace.csv] [out.png]
import csv
import sys
from pathlib import Path

import matplotlib.pyplot as plt

NORMAL = {normal}
INTERVAL = ({lo}, {hi})
TITLE = {title:?}

here = Path(__file__).resolve().parent
src = Path(sys.argv[1]) if len(sys.argv) > 1 else here / "trace.csv"
dst = Path(sys.argv[2]) if len(sys.argv) > 2 else here / "positions.png"

with open(src, newline="") as fh:
    rows = list(csv.DictReader(fh))
n = sum(1 for key in rows[0] if key.startswith("x"))
steps = [int(r["k"]) for r in rows]

fig, ax = plt.subplots(figsize=(8, 4.5))
for i in range(1, n + 1):
    style = "-" if NORMAL is None or i in NORMAL else "--"
    ax.plot(steps, [float(r[f"x{{i}}"]) for r in rows], style, label=f"agent {{i}}")
if INTERVAL[0] is not None:
    ax.axhspan(INTERVAL[0], INTERVAL[1], color="grey", alpha=0.12, label="safety interval")
ax.set_xlabel("k")
ax.set_ylabel("position")
ax.set_title(TITLE)
ax.legend(loc="best")
fig.tight_layout()
fig.savefig(dst, dpi=150)
print(dst)
"#
    )
}
