//! Recorded runs and their CSV form.
//!
//! The main file has one row per step with columns
//! `k, x1..xn, v1..vn, u1..un, upd1..updn`. The control of the final row is
//! empty because no input is applied after the horizon. A sidecar file lists
//! filter decisions and the age of every neighbour sample used.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::NodeSet;
use crate::msr::FilterDecision;

/// Age of the neighbour sample agent `agent` used from `neighbor` at a step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleAge {
    pub agent: usize,
    pub neighbor: usize,
    pub age: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub positions: Vec<f64>,
    pub velocities: Vec<f64>,
    /// Input applied between this step and the next; `None` on the last row.
    pub control: Option<Vec<f64>>,
    pub updated: Vec<bool>,
    pub decisions: Vec<FilterDecision>,
    pub sample_ages: Vec<SampleAge>,
}

impl StepRecord {
    pub(crate) fn terminal(s: &crate::dynamics::NetworkState) -> Self {
        StepRecord {
            step: s.step,
            positions: s.positions.clone(),
            velocities: s.velocities.clone(),
            control: None,
            updated: vec![false; s.len()],
            decisions: Vec::new(),
            sample_ages: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    agents: usize,
    records: Vec<StepRecord>,
}

impl Trace {
    pub fn new(agents: usize) -> Self {
        Trace {
            agents,
            records: Vec::new(),
        }
    }

    pub fn push(&mut self, record: StepRecord) {
        debug_assert_eq!(record.positions.len(), self.agents);
        self.records.push(record);
    }

    pub fn agents(&self) -> usize {
        self.agents
    }

    pub fn records(&self) -> &[StepRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// The last recorded step. Panics on an empty trace.
    pub fn last(&self) -> &StepRecord {
        self.records.last().expect("empty trace")
    }

    /// Positions of every agent at every step.
    pub fn positions(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.records.iter().map(|r| r.positions.as_slice())
    }

    /// Writes the main CSV.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let n = self.agents;
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["k".to_string()];
        for prefix in ["x", "v", "u", "upd"] {
            header.extend((1..=n).map(|i| format!("{prefix}{i}")));
        }
        w.write_record(&header).map_err(csv_err)?;
        for r in &self.records {
            let mut row = Vec::with_capacity(1 + 4 * n);
            row.push(r.step.to_string());
            row.extend(r.positions.iter().map(|x| fmt_float(*x)));
            row.extend(r.velocities.iter().map(|x| fmt_float(*x)));
            match &r.control {
                Some(u) => row.extend(u.iter().map(|x| fmt_float(*x))),
                None => row.extend(std::iter::repeat_n(String::new(), n)),
            }
            row.extend(r.updated.iter().map(|&b| u8::from(b).to_string()));
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Parse(e.to_string()))?;
        Ok(())
    }

    /// Writes the sidecar CSV: `k, agent, neighbor, role, age`, 1-indexed,
    /// where role is `kept`, `dropped_high` or `dropped_low`.
    pub fn write_sidecar<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["k", "agent", "neighbor", "role", "age"]).map_err(csv_err)?;
        for r in &self.records {
            for d in &r.decisions {
                let roles = [
                    ("kept", &d.kept),
                    ("dropped_high", &d.dropped_high),
                    ("dropped_low", &d.dropped_low),
                ];
                let mut rows: Vec<(usize, &str)> = roles
                    .iter()
                    .flat_map(|(role, set)| set.iter().map(move |&j| (j, *role)))
                    .collect();
                rows.sort();
                for (j, role) in rows {
                    let age = r
                        .sample_ages
                        .iter()
                        .find(|a| a.agent == d.agent && a.neighbor == j)
                        .map(|a| a.age.to_string())
                        .unwrap_or_default();
                    w.write_record([
                        r.step.to_string(),
                        (d.agent + 1).to_string(),
                        (j + 1).to_string(),
                        role.to_string(),
                        age,
                    ])
                    .map_err(csv_err)?;
                }
            }
        }
        w.flush().map_err(|e| Error::Parse(e.to_string()))?;
        Ok(())
    }

    /// Reads a main CSV back. Filter decisions and ages are not part of it;
    /// attach them with [`Trace::attach_sidecar`] if needed.
    pub fn read_csv<R: Read>(input: R) -> Result<Trace> {
        let mut rdr = csv::Reader::from_reader(input);
        let headers = rdr.headers().map_err(csv_err)?.clone();
        if headers.len() < 5 || (headers.len() - 1) % 4 != 0 || &headers[0] != "k" {
            return Err(Error::Parse("unexpected trace header".into()));
        }
        let n = (headers.len() - 1) / 4;
        let mut trace = Trace::new(n);
        for row in rdr.records() {
            let row = row.map_err(csv_err)?;
            let field = |i: usize| -> Result<f64> {
                row[i]
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("column {}: {e}", &headers[i])))
            };
            let step = row[0]
                .parse::<usize>()
                .map_err(|e| Error::Parse(format!("column k: {e}")))?;
            let positions = (1..=n).map(field).collect::<Result<Vec<_>>>()?;
            let velocities = (n + 1..=2 * n).map(field).collect::<Result<Vec<_>>>()?;
            let control = if row[2 * n + 1].is_empty() {
                None
            } else {
                Some((2 * n + 1..=3 * n).map(field).collect::<Result<Vec<_>>>()?)
            };
            let updated = (3 * n + 1..=4 * n).map(|i| &row[i] == "1").collect();
            trace.push(StepRecord {
                step,
                positions,
                velocities,
                control,
                updated,
                decisions: Vec::new(),
                sample_ages: Vec::new(),
            });
        }
        Ok(trace)
    }

    /// Restores filter decisions and sample ages from a sidecar CSV.
    pub fn attach_sidecar<R: Read>(&mut self, input: R) -> Result<()> {
        let mut rdr = csv::Reader::from_reader(input);
        for row in rdr.records() {
            let row = row.map_err(csv_err)?;
            let num = |i: usize| -> Result<usize> {
                row[i].parse::<usize>().map_err(|e| Error::Parse(e.to_string()))
            };
            let (k, agent, neighbor) = (num(0)?, num(1)? - 1, num(2)? - 1);
            let record = self
                .records
                .iter_mut()
                .find(|r| r.step == k)
                .ok_or_else(|| Error::Parse(format!("sidecar step {k} not in trace")))?;
            let pos = match record.decisions.iter().position(|d| d.agent == agent) {
                Some(p) => p,
                None => {
                    record.decisions.push(FilterDecision {
                        agent,
                        kept: NodeSet::new(),
                        dropped_high: NodeSet::new(),
                        dropped_low: NodeSet::new(),
                    });
                    record.decisions.len() - 1
                }
            };
            let d = &mut record.decisions[pos];
            match &row[3] {
                "kept" => d.kept.insert(neighbor),
                "dropped_high" => d.dropped_high.insert(neighbor),
                "dropped_low" => d.dropped_low.insert(neighbor),
                other => return Err(Error::Parse(format!("unknown role {other}"))),
            };
            if !row[4].is_empty() {
                record.sample_ages.push(SampleAge {
                    agent,
                    neighbor,
                    age: num(4)?,
                });
            }
        }
        for r in &mut self.records {
            r.decisions.sort_by_key(|d| d.agent);
        }
        Ok(())
    }
}

/// 17 significant digits: enough to round-trip any `f64`.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}
