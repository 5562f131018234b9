//! Partially asynchronous DP-MSR with bounded, time-varying delays.
//!
//! All agents share the sampling instants. At step `k` a normal agent either
//! updates, sampling every neighbour `j` at `x_hat_j[k - tau_ij[k]]` and
//! re-running the filter, or holds, reusing the samples and filter decision
//! from its last update. Either way the damping term uses the current
//! velocity. The delay rule of an edge is only consulted at update steps; a
//! held sample ages by one per step.

use std::collections::{BTreeMap, VecDeque};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adversary::{strategy_oscillate, Adversary, StrategyContext};
use crate::dynamics::{control_from_samples, rq_matrices, step_state, ControlVector, NetworkState, SimParams};
use crate::error::{Error, Result};
use crate::graph::{build_proposition_graph, proposition_groups, Digraph, GraphSequence, NodeSet};
use crate::msr::{check_divergence, dp_msr_filter, FilterDecision, Setup};
use crate::trace::{SampleAge, StepRecord, Trace};

/// When a single agent updates.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum UpdateRule {
    #[default]
    Always,
    Never,
    /// Steps with `k % period == phase`.
    Periodic { period: usize, phase: usize },
    /// An explicit list of update steps.
    Steps { steps: Vec<usize> },
    /// Independently with the given probability at each step.
    Random { probability: f64, seed: u64 },
}

impl UpdateRule {
    pub fn updates(&self, agent: usize, k: usize) -> bool {
        match self {
            UpdateRule::Always => true,
            UpdateRule::Never => false,
            UpdateRule::Periodic { period, phase } => *period > 0 && k % period == *phase,
            UpdateRule::Steps { steps } => steps.contains(&k),
            UpdateRule::Random { probability, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((agent as u64) << 40) ^ k as u64);
                rng.gen_bool(probability.clamp(0.0, 1.0))
            }
        }
    }

    fn check(&self) -> Result<()> {
        match self {
            UpdateRule::Periodic { period, phase } if *period == 0 || phase >= period => Err(
                Error::Schedule(format!("periodic update rule needs phase < period, got {phase}/{period}")),
            ),
            UpdateRule::Random { probability, .. } if !(0.0..=1.0).contains(probability) => Err(
                Error::Schedule(format!("update probability {probability} outside [0, 1]")),
            ),
            _ => Ok(()),
        }
    }
}

/// Per-agent update rules.
#[derive(Clone, Debug, PartialEq)]
pub struct UpdateSchedule {
    pub default: UpdateRule,
    pub overrides: BTreeMap<usize, UpdateRule>,
    /// Every agent updates at `k = 0` regardless of its rule, so that a
    /// filter decision exists before the first held step.
    pub initial_update: bool,
}

impl Default for UpdateSchedule {
    fn default() -> Self {
        UpdateSchedule::new(UpdateRule::Always)
    }
}

impl UpdateSchedule {
    pub fn new(default: UpdateRule) -> Self {
        UpdateSchedule {
            default,
            overrides: BTreeMap::new(),
            initial_update: true,
        }
    }

    pub fn with(mut self, agent: usize, rule: UpdateRule) -> Self {
        self.overrides.insert(agent, rule);
        self
    }

    pub fn rule(&self, agent: usize) -> &UpdateRule {
        self.overrides.get(&agent).unwrap_or(&self.default)
    }

    pub fn updates(&self, agent: usize, k: usize) -> bool {
        (k == 0 && self.initial_update) || self.rule(agent).updates(agent, k)
    }
}

/// Delay of one edge as a function of the step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DelayRule {
    Constant { delay: usize },
    Parity { even: usize, odd: usize },
    /// `delays[k % len]`.
    Cycle { delays: Vec<usize> },
    /// `delays[k]`; stepping past the end is an error.
    Table { delays: Vec<usize> },
    /// Uniform in `0..=max`.
    Random { max: usize, seed: u64 },
}

impl Default for DelayRule {
    fn default() -> Self {
        DelayRule::Constant { delay: 0 }
    }
}

impl DelayRule {
    pub fn delay(&self, from: usize, to: usize, k: usize) -> Result<usize> {
        Ok(match self {
            DelayRule::Constant { delay } => *delay,
            DelayRule::Parity { even, odd } => {
                if k.is_multiple_of(2) {
                    *even
                } else {
                    *odd
                }
            }
            DelayRule::Cycle { delays } => {
                if delays.is_empty() {
                    return Err(Error::Schedule("empty delay cycle".into()));
                }
                delays[k % delays.len()]
            }
            DelayRule::Table { delays } => *delays.get(k).ok_or_else(|| {
                Error::Schedule(format!(
                    "delay table of edge ({}, {}) has no entry for step {k}",
                    from + 1,
                    to + 1
                ))
            })?,
            DelayRule::Random { max, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(
                    seed ^ ((from as u64) << 48) ^ ((to as u64) << 32) ^ k as u64,
                );
                rng.gen_range(0..=*max)
            }
        })
    }
}

/// Per-edge delay rules with the uniform bound `tau`.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct DelaySchedule {
    pub tau: usize,
    pub default: DelayRule,
    /// Keyed by `(from, to)`.
    pub overrides: BTreeMap<(usize, usize), DelayRule>,
}

impl DelaySchedule {
    pub fn new(tau: usize, default: DelayRule) -> Self {
        DelaySchedule {
            tau,
            default,
            overrides: BTreeMap::new(),
        }
    }

    pub fn with_edge(mut self, from: usize, to: usize, rule: DelayRule) -> Self {
        self.overrides.insert((from, to), rule);
        self
    }

    /// `tau_ij[k]` for the edge `from -> to`; errors if it exceeds `tau`.
    pub fn delay(&self, from: usize, to: usize, k: usize) -> Result<usize> {
        let rule = self.overrides.get(&(from, to)).unwrap_or(&self.default);
        let d = rule.delay(from, to, k)?;
        if d > self.tau {
            return Err(Error::Schedule(format!(
                "delay {d} on edge ({}, {}) at step {k} exceeds tau = {}",
                from + 1,
                to + 1,
                self.tau
            )));
        }
        Ok(d)
    }
}

/// Everything the asynchronous engine needs beyond a [`Setup`].
#[derive(Clone, Debug, Default)]
pub struct AsyncTiming {
    pub delays: DelaySchedule,
    pub updates: UpdateSchedule,
    /// Positions before step 0, most recent first: `history[d - 1]` is
    /// `x_hat[-d]`. Missing entries repeat the initial positions.
    pub history: Option<Vec<Vec<f64>>>,
    /// Optional time-varying topology; step `k` uses `graphs[k % len]`.
    pub graphs: Option<GraphSequence>,
}

impl AsyncTiming {
    pub fn synchronous() -> Self {
        AsyncTiming::default()
    }

    pub fn tau(&self) -> usize {
        self.delays.tau
    }

    pub fn graph_at<'a>(&'a self, k: usize, base: &'a Digraph) -> &'a Digraph {
        match &self.graphs {
            Some(seq) if !seq.is_empty() => &seq.graphs()[k % seq.len()],
            _ => base,
        }
    }

    fn check(&self, n: usize) -> Result<()> {
        self.updates.default.check()?;
        for rule in self.updates.overrides.values() {
            rule.check()?;
        }
        if let Some(h) = &self.history {
            if h.len() > self.tau() {
                return Err(Error::Schedule(format!(
                    "{} history rows given but tau = {}",
                    h.len(),
                    self.tau()
                )));
            }
            if h.iter().any(|row| row.len() != n || row.iter().any(|x| !x.is_finite())) {
                return Err(Error::input("history rows must hold one finite position per agent"));
            }
        }
        if let Some(seq) = &self.graphs {
            if seq.graphs().iter().any(|g| g.node_count() != n) {
                return Err(Error::input("graph sequence does not match the agent count"));
            }
        }
        Ok(())
    }
}

/// The last `tau + 1` position vectors, newest first.
#[derive(Clone, Debug, PartialEq)]
pub struct HistoryBuffer {
    slots: VecDeque<Vec<f64>>,
}

impl HistoryBuffer {
    /// Buffer at `k = 0`. Slots not covered by `explicit` repeat `initial`.
    pub fn new(initial: &[f64], tau: usize, explicit: Option<&[Vec<f64>]>) -> Self {
        let mut slots = VecDeque::with_capacity(tau + 1);
        slots.push_back(initial.to_vec());
        for d in 1..=tau {
            let row = explicit
                .and_then(|h| h.get(d - 1))
                .map_or_else(|| initial.to_vec(), Clone::clone);
            slots.push_back(row);
        }
        HistoryBuffer { slots }
    }

    pub fn tau(&self) -> usize {
        self.slots.len() - 1
    }

    pub fn push(&mut self, positions: Vec<f64>) {
        self.slots.pop_back();
        self.slots.push_front(positions);
    }

    /// `x_hat[k - delay]`.
    pub fn get(&self, delay: usize) -> Result<&[f64]> {
        self.slots
            .get(delay)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Schedule(format!("delay {delay} exceeds the buffer depth {}", self.tau())))
    }

    /// `z[k] = (x_hat[k], x_hat[k-1], ..., x_hat[k-tau])` stacked.
    pub fn z(&self) -> Vec<f64> {
        self.slots.iter().flatten().copied().collect()
    }
}

/// One stored neighbour sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeldSample {
    pub neighbor: usize,
    pub weight: f64,
    pub value: f64,
    /// Step the value was observed at; negative for prefilled history.
    pub taken_at: i64,
}

/// What a normal agent reuses while it is not updating.
#[derive(Clone, Debug, PartialEq)]
pub struct HeldState {
    pub decision: FilterDecision,
    pub samples: Vec<HeldSample>,
}

/// Mutable engine memory carried across rounds.
#[derive(Clone, Debug)]
pub struct AsyncMemory {
    pub buffer: HistoryBuffer,
    pub held: Vec<Option<HeldState>>,
}

impl AsyncMemory {
    pub fn new(initial: &[f64], timing: &AsyncTiming) -> Self {
        AsyncMemory {
            buffer: HistoryBuffer::new(initial, timing.tau(), timing.history.as_deref()),
            held: vec![None; initial.len()],
        }
    }
}

#[derive(Clone, Debug)]
pub struct AsyncRoundOutcome {
    pub state: NetworkState,
    /// Decision in force for each normal agent, ascending by agent.
    pub decisions: Vec<FilterDecision>,
    pub control: ControlVector,
    pub updated: Vec<bool>,
    pub ages: Vec<SampleAge>,
}

/// One asynchronous round. `memory.buffer` must hold `x_hat[k]` in front;
/// it is advanced to `k + 1` before returning.
#[allow(clippy::too_many_arguments)]
pub fn async_round(
    s: &NetworkState,
    memory: &mut AsyncMemory,
    g: &Digraph,
    timing: &AsyncTiming,
    p: &SimParams,
    adversary: &Adversary,
    history: &[Vec<f64>],
) -> Result<AsyncRoundOutcome> {
    let n = s.len();
    let k = s.step;
    if g.node_count() != n || memory.held.len() != n {
        return Err(Error::input("graph, memory and state disagree on the agent count"));
    }
    let mut u = vec![0.0; n];
    let mut updated = vec![false; n];
    let mut decisions = Vec::new();
    let mut ages = Vec::new();
    for i in 0..n {
        if adversary.is_malicious(i) {
            let ctx = StrategyContext {
                agent: i,
                step: k,
                state: s,
                params: p,
                history,
                timing: Some(timing),
            };
            u[i] = adversary.control(&ctx)?;
            continue;
        }
        if timing.updates.updates(i, k) {
            let mut samples = Vec::with_capacity(g.in_degree(i));
            for (j, w) in g.in_neighbors(i) {
                let d = timing.delays.delay(j, i, k)?;
                samples.push(HeldSample {
                    neighbor: j,
                    weight: w,
                    value: memory.buffer.get(d)?[j],
                    taken_at: k as i64 - d as i64,
                });
            }
            let rel: Vec<(usize, f64)> = samples
                .iter()
                .map(|h| (h.neighbor, h.value - s.positions[i]))
                .collect();
            let decision = dp_msr_filter(i, &rel, p.f);
            memory.held[i] = Some(HeldState { decision, samples });
            updated[i] = true;
        }
        match &memory.held[i] {
            Some(held) => {
                let kept = held
                    .samples
                    .iter()
                    .filter(|h| held.decision.kept.contains(&h.neighbor))
                    .map(|h| (h.weight, h.value));
                u[i] = control_from_samples(s.positions[i], s.velocities[i], kept, p.alpha);
                ages.extend(held.samples.iter().map(|h| SampleAge {
                    agent: i,
                    neighbor: h.neighbor,
                    age: (k as i64 - h.taken_at) as usize,
                }));
                decisions.push(held.decision.clone());
            }
            None => {
                u[i] = control_from_samples(s.positions[i], s.velocities[i], [], p.alpha);
                decisions.push(FilterDecision {
                    agent: i,
                    kept: NodeSet::new(),
                    dropped_high: NodeSet::new(),
                    dropped_low: NodeSet::new(),
                });
            }
        }
    }
    let control = ControlVector(u);
    let state = step_state(s, &control, p)?;
    memory.buffer.push(state.positions.clone());
    Ok(AsyncRoundOutcome {
        state,
        decisions,
        control,
        updated,
        ages,
    })
}

/// Warnings for every (agent, neighbour) whose held sample can grow older
/// than `tau` within `horizon` steps.
pub fn freshness_warnings(
    timing: &AsyncTiming,
    g: &Digraph,
    normal: &NodeSet,
    horizon: usize,
) -> Result<Vec<String>> {
    let tau = timing.tau();
    let mut warnings = Vec::new();
    for &i in normal {
        let neighbors: Vec<usize> = g.in_neighbors(i).map(|(j, _)| j).collect();
        let mut age: Vec<Option<usize>> = vec![None; neighbors.len()];
        let mut reported = vec![false; neighbors.len()];
        for k in 0..horizon {
            let fresh = timing.updates.updates(i, k);
            for (slot, &j) in neighbors.iter().enumerate() {
                age[slot] = if fresh {
                    Some(timing.delays.delay(j, i, k)?)
                } else {
                    age[slot].map(|a| a + 1)
                };
                if let Some(a) = age[slot] {
                    if a > tau && !reported[slot] {
                        reported[slot] = true;
                        warnings.push(format!(
                            "agent {} holds its sample of agent {} for age {a} > tau = {tau} at step {k}",
                            i + 1,
                            j + 1
                        ));
                    }
                }
            }
        }
    }
    Ok(warnings)
}

/// Runs asynchronous DP-MSR for `setup.horizon` steps.
pub fn run_async(setup: &Setup, timing: &AsyncTiming) -> Result<Trace> {
    setup.validate()?;
    let n = setup.graph.node_count();
    timing.check(n)?;
    for w in freshness_warnings(timing, &setup.graph, &setup.normal_agents(), setup.horizon)? {
        log::warn!("{w}");
    }
    let mut trace = Trace::new(n);
    let mut state = setup.initial.clone();
    state.step = 0;
    let mut memory = AsyncMemory::new(&state.positions, timing);
    let mut history = vec![state.positions.clone()];
    for k in 0..setup.horizon {
        let g = timing.graph_at(k, &setup.graph);
        let out = async_round(&state, &mut memory, g, timing, &setup.params, &setup.adversary, &history)?;
        trace.push(StepRecord {
            step: state.step,
            positions: state.positions.clone(),
            velocities: state.velocities.clone(),
            control: Some(out.control.0),
            updated: out.updated,
            decisions: out.decisions,
            sample_ages: out.ages,
        });
        state = out.state;
        history.push(state.positions.clone());
        check_divergence(&state, &trace)?;
    }
    trace.push(StepRecord::terminal(&state));
    Ok(trace)
}

/// `L_tau = [D - A_0, -A_1, ..., -A_tau]` over the edges of `g`, with each
/// edge placed in the block of its sample age. Malicious rows are zero.
fn delayed_laplacian(g: &Digraph, ages: &[SampleAge], tau: usize, malicious: &NodeSet) -> Result<DMatrix<f64>> {
    let n = g.node_count();
    let age_of: BTreeMap<(usize, usize), usize> =
        ages.iter().map(|a| ((a.neighbor, a.agent), a.age)).collect();
    let mut l = DMatrix::zeros(n, n * (tau + 1));
    for (j, i, w) in g.edges() {
        if malicious.contains(&i) {
            continue;
        }
        let d = age_of.get(&(j, i)).copied().unwrap_or(0);
        if d > tau {
            return Err(Error::Schedule(format!(
                "sample of agent {} used by agent {} has age {d} > tau = {tau}",
                j + 1,
                i + 1
            )));
        }
        l[(i, i)] += w;
        l[(i, d * n + j)] -= w;
    }
    Ok(l)
}

/// Two-step position matrices over stacked delayed positions: for `k >= 1`,
/// normal rows satisfy `x_hat[k+1] = Lambda1 z[k] + Lambda2 z[k-1]`.
///
/// `gk` and `gk_prev` are the effective graphs (kept edges only) at `k` and
/// `k-1`, and `ages_*` the sample ages in force at those steps.
pub fn lambda_matrices(
    gk: &Digraph,
    ages_k: &[SampleAge],
    gk_prev: &Digraph,
    ages_prev: &[SampleAge],
    tau: usize,
    p: &SimParams,
    malicious: &NodeSet,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    p.ensure_valid()?;
    let n = gk.node_count();
    if gk_prev.node_count() != n {
        return Err(Error::input("graphs disagree on the agent count"));
    }
    let t = p.period;
    let half_t2 = t * t / 2.0;
    let (r, q) = rq_matrices(n, p, malicious);
    let mut lead = DMatrix::zeros(n, n * (tau + 1));
    lead.view_mut((0, 0), (n, n)).fill_with_identity();
    let l_k = delayed_laplacian(gk, ages_k, tau, malicious)?;
    let l_prev = delayed_laplacian(gk_prev, ages_prev, tau, malicious)?;
    let gamma_k = &lead - &l_k * half_t2;
    let gamma_prev = &lead - &l_prev * half_t2;
    let mut r_pad = DMatrix::zeros(n, n * (tau + 1));
    r_pad.view_mut((0, 0), (n, n)).copy_from(&r);
    let lambda1 = r_pad + gamma_k;
    let lambda2 = -(&r * gamma_prev) - (&q * t) * l_prev;
    Ok((lambda1, lambda2))
}

/// An asynchronous experiment.
#[derive(Clone, Debug)]
pub struct AsyncScenario {
    pub setup: Setup,
    pub timing: AsyncTiming,
}

impl AsyncScenario {
    pub fn run(&self) -> Result<Trace> {
        run_async(&self.setup, &self.timing)
    }
}

/// The two-cluster counterexample on [`build_proposition_graph`]: the `G2`
/// block is malicious and alternates between `a` (even steps) and `b` (odd
/// steps); delays make it look constant at `a` to `G3` and at `b` to `G4`.
pub fn build_proposition1_scenario(f: usize, a: f64, b: f64, c: f64) -> Result<AsyncScenario> {
    if !(a < c && c < b) {
        return Err(Error::input(format!("need a < c < b, got a = {a}, c = {c}, b = {b}")));
    }
    let graph = build_proposition_graph(f)?;
    let [g1, g2, g3, g4] = proposition_groups(f);
    let n = graph.node_count();
    let mut x0 = vec![0.0; n];
    for (range, value) in [(&g1, c), (&g2, a), (&g3, a), (&g4, b)] {
        x0[range.clone()].fill(value);
    }
    let mut before = x0.clone();
    before[g2.clone()].fill(b);

    let mut adversary = Adversary::none(f);
    for m in g2.clone() {
        adversary = adversary.with(m, strategy_oscillate(a, b));
    }
    let mut delays = DelaySchedule::new(1, DelayRule::Constant { delay: 0 });
    for (j, i, _) in graph.edges() {
        if g2.contains(&j) && g3.contains(&i) {
            delays = delays.with_edge(j, i, DelayRule::Parity { even: 0, odd: 1 });
        } else if g2.contains(&j) && g4.contains(&i) {
            delays = delays.with_edge(j, i, DelayRule::Parity { even: 1, odd: 0 });
        }
    }
    Ok(AsyncScenario {
        setup: Setup {
            params: SimParams::new(0.3, 3.67, n, f),
            initial: NetworkState::new(x0, vec![0.0; n])?,
            graph,
            adversary,
            horizon: 1000,
        },
        timing: AsyncTiming {
            delays,
            updates: UpdateSchedule::new(UpdateRule::Always),
            history: Some(vec![before]),
            graphs: None,
        },
    })
}
