//! The synchronous DP-MSR filter and simulation engine.
//!
//! Every normal agent sorts the relative positions of its neighbours, ignores
//! up to `f` of the largest and up to `f` of the smallest, and applies the
//! nominal control law over what remains. Weights of ignored edges are set to
//! zero; the remaining weights are not renormalised.

use std::cmp::Ordering;

use crate::adversary::{Adversary, StrategyContext};
use crate::dynamics::{control_from_samples, step_state, ControlVector, NetworkState, SimParams};
use crate::error::{Error, Result};
use crate::graph::{Digraph, NodeSet};
use crate::trace::{SampleAge, StepRecord, Trace};

/// Positions beyond this magnitude abort a run.
pub const DIVERGENCE_LIMIT: f64 = 1e9;

/// Outcome of filtering one agent's neighbourhood.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FilterDecision {
    pub agent: usize,
    pub kept: NodeSet,
    pub dropped_high: NodeSet,
    pub dropped_low: NodeSet,
}

/// Splits the neighbours of `agent` into kept and ignored sets.
///
/// High side: if fewer than `f` neighbours have a relative value `>= 0`, all of
/// those are ignored; otherwise the `f` largest are. The low side applies the
/// mirror rule (`<= 0`, smallest) to the neighbours not already ignored, so a
/// neighbour at relative value zero can be claimed by either side but never by
/// both. Ties go to the lower neighbour index.
pub fn dp_msr_filter(agent: usize, rel_values: &[(usize, f64)], f: usize) -> FilterDecision {
    let mut descending: Vec<(usize, f64)> = rel_values.to_vec();
    descending.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    let nonneg = descending.iter().take_while(|(_, v)| *v >= 0.0).count();
    let high_count = nonneg.min(f);
    let dropped_high: NodeSet = descending[..high_count].iter().map(|(j, _)| *j).collect();

    let mut ascending: Vec<(usize, f64)> = descending[high_count..].to_vec();
    ascending.sort_by(|a, b| match a.1.total_cmp(&b.1) {
        Ordering::Equal => a.0.cmp(&b.0),
        other => other,
    });
    let nonpos = ascending.iter().take_while(|(_, v)| *v <= 0.0).count();
    let low_count = nonpos.min(f);
    let dropped_low: NodeSet = ascending[..low_count].iter().map(|(j, _)| *j).collect();

    let kept = ascending[low_count..].iter().map(|(j, _)| *j).collect();
    FilterDecision {
        agent,
        kept,
        dropped_high,
        dropped_low,
    }
}

/// The state after one round, plus what produced it.
#[derive(Clone, Debug)]
pub struct RoundOutcome {
    pub state: NetworkState,
    /// One decision per normal agent, ascending by agent.
    pub decisions: Vec<FilterDecision>,
    pub control: ControlVector,
}

/// One synchronous DP-MSR round. All decisions are taken on the step-k
/// snapshot before anything moves. `history` holds positions at steps
/// `0..=k` and is only read by attack strategies.
pub fn sync_round(
    s: &NetworkState,
    g: &Digraph,
    p: &SimParams,
    adversary: &Adversary,
    history: &[Vec<f64>],
) -> Result<RoundOutcome> {
    let n = s.len();
    if g.node_count() != n {
        return Err(Error::input("graph and state disagree on the agent count"));
    }
    let mut decisions = Vec::with_capacity(n);
    let mut u = vec![0.0; n];
    for i in 0..n {
        if adversary.is_malicious(i) {
            let ctx = StrategyContext {
                agent: i,
                step: s.step,
                state: s,
                params: p,
                history,
                timing: None,
            };
            u[i] = adversary.control(&ctx)?;
            continue;
        }
        let rel: Vec<(usize, f64)> = g
            .in_neighbors(i)
            .map(|(j, _)| (j, s.positions[j] - s.positions[i]))
            .collect();
        let decision = dp_msr_filter(i, &rel, p.f);
        u[i] = control_from_samples(
            s.positions[i],
            s.velocities[i],
            decision
                .kept
                .iter()
                .map(|&j| (g.weight(j, i).unwrap_or(0.0), s.positions[j])),
            p.alpha,
        );
        decisions.push(decision);
    }
    let control = ControlVector(u);
    let state = step_state(s, &control, p)?;
    Ok(RoundOutcome {
        state,
        decisions,
        control,
    })
}

/// The graph actually used in a round: kept edges of normal agents only.
pub fn effective_graph(g: &Digraph, decisions: &[FilterDecision]) -> Result<Digraph> {
    let mut kept = vec![NodeSet::new(); g.node_count()];
    for d in decisions {
        kept[d.agent] = d.kept.clone();
    }
    g.restricted(&kept)
}

/// Everything needed to run one experiment.
#[derive(Clone, Debug)]
pub struct Setup {
    pub graph: Digraph,
    pub params: SimParams,
    pub initial: NetworkState,
    pub adversary: Adversary,
    pub horizon: usize,
}

impl Setup {
    /// Checks agent counts, the gain condition and the adversary model.
    pub fn validate(&self) -> Result<()> {
        let n = self.graph.node_count();
        if self.initial.len() != n || self.params.agents != n {
            return Err(Error::input(format!(
                "graph has {n} nodes, initial state {} agents, params {} agents",
                self.initial.len(),
                self.params.agents
            )));
        }
        self.params.ensure_valid()?;
        self.adversary.ensure_valid(&self.graph)?;
        for &m in self.adversary.malicious() {
            if self.adversary.strategy(m).is_none() {
                return Err(Error::Model(format!("malicious agent {} has no strategy", m + 1)));
            }
        }
        Ok(())
    }

    pub fn normal_agents(&self) -> NodeSet {
        self.adversary.model.normal_agents(self.graph.node_count())
    }
}

pub(crate) fn check_divergence(state: &NetworkState, trace: &Trace) -> Result<()> {
    if let Some((agent, x)) = state
        .positions
        .iter()
        .enumerate()
        .find(|(_, x)| x.abs() > DIVERGENCE_LIMIT)
    {
        return Err(Error::Diverged {
            step: state.step,
            agent,
            magnitude: x.abs(),
            partial: Box::new(trace.clone()),
        });
    }
    Ok(())
}

/// Runs synchronous DP-MSR for `setup.horizon` steps.
pub fn run_sync(setup: &Setup) -> Result<Trace> {
    setup.validate()?;
    let n = setup.graph.node_count();
    let mut trace = Trace::new(n);
    let mut state = setup.initial.clone();
    state.step = 0;
    let mut history = vec![state.positions.clone()];
    for _ in 0..setup.horizon {
        let outcome = sync_round(&state, &setup.graph, &setup.params, &setup.adversary, &history)?;
        let mut updated = vec![false; n];
        let mut ages = Vec::new();
        for d in &outcome.decisions {
            updated[d.agent] = true;
            ages.extend(setup.graph.in_neighbors(d.agent).map(|(j, _)| SampleAge {
                agent: d.agent,
                neighbor: j,
                age: 0,
            }));
        }
        trace.push(StepRecord {
            step: state.step,
            positions: state.positions.clone(),
            velocities: state.velocities.clone(),
            control: Some(outcome.control.0),
            updated,
            decisions: outcome.decisions,
            sample_ages: ages,
        });
        state = outcome.state;
        history.push(state.positions.clone());
        check_divergence(&state, &trace)?;
    }
    trace.push(StepRecord::terminal(&state));
    Ok(trace)
}
