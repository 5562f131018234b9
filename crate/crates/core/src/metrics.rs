//! Post-hoc analysis of traces: safety intervals, consensus detection,
//! envelopes, clustering and convergence rate.

use serde::{Deserialize, Serialize};

use crate::asyncsim::HistoryBuffer;
use crate::dynamics::{NetworkState, SimParams};
use crate::error::{Error, Result};
use crate::graph::NodeSet;
use crate::trace::Trace;

/// Slack used by [`check_safety`].
pub const SAFETY_SLACK: f64 = 1e-9;
pub const DEFAULT_TOLERANCE: f64 = 1e-6;
pub const DEFAULT_TAIL: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SafetyInterval {
    pub lo: f64,
    pub hi: f64,
}

impl SafetyInterval {
    pub fn contains(&self, x: f64, slack: f64) -> bool {
        x >= self.lo - slack && x <= self.hi + slack
    }
}

fn interval_from(positions: impl Iterator<Item = f64> + Clone, velocities: &[f64], p: &SimParams) -> Result<SafetyInterval> {
    let g = p.velocity_gain();
    let lo = positions.clone().fold(f64::INFINITY, f64::min);
    let hi = positions.fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() || velocities.is_empty() {
        return Err(Error::input("the normal set is empty"));
    }
    let scaled = velocities.iter().map(|v| g * v);
    let vlo = scaled.clone().fold(0.0, f64::min);
    let vhi = scaled.fold(0.0, f64::max);
    Ok(SafetyInterval {
        lo: lo + vlo,
        hi: hi + vhi,
    })
}

fn normal_values(values: &[f64], normal: &NodeSet) -> Vec<f64> {
    normal.iter().filter_map(|&i| values.get(i).copied()).collect()
}

/// `[min x_N + min(0, g v_N), max x_N + max(0, g v_N)]` with
/// `g = T - alpha T^2 / 2`, over the normal agents only.
pub fn safety_interval_sync(s0: &NetworkState, p: &SimParams, normal: &NodeSet) -> Result<SafetyInterval> {
    let x = normal_values(&s0.positions, normal);
    let v = normal_values(&s0.velocities, normal);
    interval_from(x.into_iter(), &v, p)
}

/// Same as [`safety_interval_sync`] with the position extremes taken over
/// the whole initial history `z[0]`.
pub fn safety_interval_async(
    z0: &HistoryBuffer,
    v0: &[f64],
    p: &SimParams,
    normal: &NodeSet,
) -> Result<SafetyInterval> {
    let mut x = Vec::new();
    for d in 0..=z0.tau() {
        x.extend(normal_values(z0.get(d)?, normal));
    }
    let v = normal_values(v0, normal);
    interval_from(x.into_iter(), &v, p)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SafetyViolation {
    pub step: usize,
    pub agent: usize,
    pub position: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SafetyCheck {
    pub holds: bool,
    pub first_violation: Option<SafetyViolation>,
}

/// Checks every normal position at every recorded step.
pub fn check_safety(trace: &Trace, interval: &SafetyInterval, normal: &NodeSet) -> SafetyCheck {
    for r in trace.records() {
        for &i in normal {
            let x = r.positions[i];
            if !interval.contains(x, SAFETY_SLACK) {
                return SafetyCheck {
                    holds: false,
                    first_violation: Some(SafetyViolation {
                        step: r.step,
                        agent: i,
                        position: x,
                    }),
                };
            }
        }
    }
    SafetyCheck {
        holds: true,
        first_violation: None,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsensusVerdict {
    pub achieved: bool,
    /// Mean final normal position when consensus is achieved.
    pub value: Option<f64>,
    /// First step from which spread and speeds stay within tolerance.
    pub step_of_convergence: Option<usize>,
    pub final_spread: f64,
    pub max_speed_tail: f64,
}

fn spread(values: &[f64], normal: &NodeSet) -> f64 {
    let x = normal_values(values, normal);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    hi - lo
}

fn max_speed(values: &[f64], normal: &NodeSet) -> f64 {
    normal_values(values, normal).iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Consensus holds when, over the last `tail` steps, the normal spread and
/// every normal speed stay within `tol`.
pub fn check_consensus(trace: &Trace, normal: &NodeSet, tol: f64, tail: usize) -> Result<ConsensusVerdict> {
    if !(tol > 0.0) {
        return Err(Error::input("tolerance must be positive"));
    }
    if normal.is_empty() {
        return Err(Error::input("the normal set is empty"));
    }
    let recs = trace.records();
    if recs.len() < tail.max(1) {
        return Err(Error::input(format!(
            "trace has {} steps, fewer than the tail window of {tail}",
            recs.len()
        )));
    }
    let within = |i: usize| spread(&recs[i].positions, normal) <= tol && max_speed(&recs[i].velocities, normal) <= tol;
    let tail_start = recs.len() - tail.max(1);
    let achieved = (tail_start..recs.len()).all(within);
    let mut first = recs.len();
    while first > 0 && within(first - 1) {
        first -= 1;
    }
    let last = trace.last();
    let final_positions = normal_values(&last.positions, normal);
    let max_speed_tail = recs[tail_start..]
        .iter()
        .map(|r| max_speed(&r.velocities, normal))
        .fold(0.0, f64::max);
    Ok(ConsensusVerdict {
        achieved,
        value: achieved.then(|| final_positions.iter().sum::<f64>() / final_positions.len() as f64),
        step_of_convergence: (first < recs.len()).then(|| recs[first].step),
        final_spread: spread(&last.positions, normal),
        max_speed_tail,
    })
}

/// Rolling `(max, min)` of normal positions over the last `depth` steps.
/// Windows are truncated at step 0.
pub fn envelopes(trace: &Trace, normal: &NodeSet, depth: usize) -> Vec<(f64, f64)> {
    let depth = depth.max(1);
    let per_step: Vec<(f64, f64)> = trace
        .records()
        .iter()
        .map(|r| {
            let x = normal_values(&r.positions, normal);
            (
                x.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                x.iter().copied().fold(f64::INFINITY, f64::min),
            )
        })
        .collect();
    (0..per_step.len())
        .map(|k| {
            let window = &per_step[k.saturating_sub(depth - 1)..=k];
            (
                window.iter().map(|w| w.0).fold(f64::NEG_INFINITY, f64::max),
                window.iter().map(|w| w.1).fold(f64::INFINITY, f64::min),
            )
        })
        .collect()
}

/// First step at which the upper envelope rises or the lower one falls,
/// beyond `slack`, for `k >= 1`.
pub fn envelope_violation(env: &[(f64, f64)], slack: f64) -> Option<usize> {
    (2..env.len()).find(|&k| env[k].0 > env[k - 1].0 + slack || env[k].1 < env[k - 1].1 - slack)
}

/// A group of agents whose sorted positions are separated by at most the
/// clustering gap.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub members: Vec<usize>,
    pub center: f64,
}

/// Splits the normal agents wherever consecutive sorted positions differ by
/// more than `gap`.
pub fn position_clusters(positions: &[f64], normal: &NodeSet, gap: f64) -> Vec<Cluster> {
    let mut sorted: Vec<(usize, f64)> = normal.iter().map(|&i| (i, positions[i])).collect();
    sorted.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let mut clusters: Vec<Vec<(usize, f64)>> = Vec::new();
    for (i, x) in sorted {
        match clusters.last_mut() {
            Some(c) if x - c.last().unwrap().1 <= gap => c.push((i, x)),
            _ => clusters.push(vec![(i, x)]),
        }
    }
    clusters
        .into_iter()
        .map(|c| {
            let center = c.iter().map(|e| e.1).sum::<f64>() / c.len() as f64;
            let mut members: Vec<usize> = c.into_iter().map(|e| e.0).collect();
            members.sort_unstable();
            Cluster { members, center }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    /// Least-squares slope of `ln V(k)` per step.
    pub slope: f64,
    pub r_squared: f64,
    /// Steps `[start, end)` used for the fit.
    pub segment: (usize, usize),
    /// True when the slope is negative and the fit explains the data.
    pub converging: bool,
}

/// Values below this (relative to the first) are treated as converged and
/// excluded from the fit.
const DECAY_FLOOR: f64 = 1e-12;

/// Fits `ln V(k) = a + slope k` over the decay segment of `series`.
///
/// Non-positive values are floored at machine epsilon. The segment ends at
/// the first value below `1e-12` times the initial one.
pub fn fit_log_decay(series: &[f64]) -> RateEstimate {
    let floored: Vec<f64> = series.iter().map(|v| v.max(f64::EPSILON)).collect();
    let v0 = floored.first().copied().unwrap_or(f64::EPSILON);
    let floor = (v0 * DECAY_FLOOR).max(f64::EPSILON);
    let mut end = floored.iter().position(|&v| v <= floor).unwrap_or(floored.len());
    if end < 3 {
        end = floored.len();
    }
    let ys: Vec<f64> = floored[..end].iter().map(|v| v.ln()).collect();
    let m = ys.len() as f64;
    if ys.len() < 2 {
        return RateEstimate {
            slope: 0.0,
            r_squared: 0.0,
            segment: (0, end),
            converging: false,
        };
    }
    let x_mean = (m - 1.0) / 2.0;
    let y_mean = ys.iter().sum::<f64>() / m;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (k, y) in ys.iter().enumerate() {
        let dx = k as f64 - x_mean;
        let dy = y - y_mean;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 0.0 } else { (sxy * sxy) / (sxx * syy) };
    RateEstimate {
        slope,
        r_squared,
        segment: (0, end),
        converging: slope < 0.0 && r_squared > 0.9,
    }
}

/// Fits the decay of the two-step envelope gap of the normal agents.
pub fn rate_estimate(trace: &Trace, normal: &NodeSet) -> RateEstimate {
    let gaps: Vec<f64> = envelopes(trace, normal, 2).iter().map(|(hi, lo)| hi - lo).collect();
    fit_log_decay(&gaps)
}
