//! Malicious agents: the f-total / f-local models and attack strategies.
//!
//! Malicious agents obey the same double-integrator dynamics as everybody
//! else; only their control input is arbitrary. A [`Strategy`] chooses that
//! input from the run so far. Strategies see the whole history and, for
//! asynchronous runs, the update and delay schedules.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::asyncsim::AsyncTiming;
use crate::dynamics::{next_position, NetworkState, SimParams};
use crate::error::{Error, Result};
use crate::graph::{Digraph, NodeSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// At most `f` malicious agents in the network.
    Total,
    /// At most `f` malicious agents among the in-neighbours of any normal agent.
    Local,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AdversaryModel {
    pub kind: ModelKind,
    pub f: usize,
    pub malicious: NodeSet,
}

impl AdversaryModel {
    pub fn total(f: usize, malicious: NodeSet) -> Self {
        AdversaryModel {
            kind: ModelKind::Total,
            f,
            malicious,
        }
    }

    pub fn local(f: usize, malicious: NodeSet) -> Self {
        AdversaryModel {
            kind: ModelKind::Local,
            f,
            malicious,
        }
    }

    pub fn normal_agents(&self, n: usize) -> NodeSet {
        (0..n).filter(|i| !self.malicious.contains(i)).collect()
    }
}

/// Checks the kind-specific bound on the malicious set.
pub fn validate_model(g: &Digraph, m: &AdversaryModel) -> bool {
    let n = g.node_count();
    if m.malicious.iter().any(|&v| v >= n) {
        return false;
    }
    match m.kind {
        ModelKind::Total => m.malicious.len() <= m.f,
        ModelKind::Local => (0..n).filter(|i| !m.malicious.contains(i)).all(|i| {
            g.in_neighbors(i).filter(|(j, _)| m.malicious.contains(j)).count() <= m.f
        }),
    }
}

/// Everything a strategy may look at when choosing `u_i[k]`.
pub struct StrategyContext<'a> {
    pub agent: usize,
    pub step: usize,
    pub state: &'a NetworkState,
    pub params: &'a SimParams,
    /// Positions of all agents at steps `0..=step`.
    pub history: &'a [Vec<f64>],
    pub timing: Option<&'a AsyncTiming>,
}

impl StrategyContext<'_> {
    pub fn position(&self) -> f64 {
        self.state.positions[self.agent]
    }

    pub fn velocity(&self) -> f64 {
        self.state.velocities[self.agent]
    }

    /// Control that puts this agent at `target` after one step; the velocity
    /// is whatever the dynamics produce.
    ///
    /// Rounding can leave the closed-form input a few ulps off, so nearby
    /// inputs are scanned for one that lands on `target` bit for bit; if none
    /// does, the closest is used.
    pub fn control_to_reach(&self, target: f64) -> f64 {
        self.search_control(target, None)
    }

    /// Like [`control_to_reach`](Self::control_to_reach), but when `target`
    /// cannot be hit exactly the landing point is kept on the given side of
    /// it (`above = true` means `x >= target`).
    pub fn control_to_reach_beyond(&self, target: f64, above: bool) -> f64 {
        self.search_control(target, Some(above))
    }

    fn search_control(&self, target: f64, above: Option<bool>) -> f64 {
        let (t, x, v) = (self.params.period, self.position(), self.velocity());
        let base = 2.0 * (target - x - t * v) / (t * t);
        if !base.is_finite() {
            return base;
        }
        // Candidates on the wrong side rank after every candidate on the right one.
        let score = |u: f64| {
            let reached = next_position(x, v, u, t);
            let wrong_side = match above {
                Some(true) => reached < target,
                Some(false) => reached > target,
                None => false,
            };
            (wrong_side, (reached - target).abs())
        };
        let (mut best, mut best_score) = (base, score(base));
        let (mut up, mut down) = (base, base);
        for _ in 0..CONTROL_SEARCH_ULPS {
            if best_score == (false, 0.0) {
                break;
            }
            up = up.next_up();
            down = down.next_down();
            for u in [up, down] {
                let candidate = score(u);
                if candidate < best_score {
                    best = u;
                    best_score = candidate;
                }
            }
        }
        best
    }
}

/// How far [`StrategyContext::control_to_reach`] searches on each side.
const CONTROL_SEARCH_ULPS: usize = 256;

/// Chooses the control input of one malicious agent. Must be a pure function
/// of the context.
pub trait Strategy: fmt::Debug + Send + Sync {
    fn control(&self, ctx: &StrategyContext<'_>) -> Result<f64>;
}

/// One row of a scripted attack.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScriptEntry {
    /// Position to reach at the next step.
    Target(f64),
    /// Raw control input.
    Control(f64),
}

/// Strategies that can be named in scenario files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BuiltinStrategy {
    /// Drive to `position` and stay there. Defaults to the initial position.
    Hold {
        #[serde(default)]
        position: Option<f64>,
    },
    /// Sit at `low` on even steps and at `high` on odd steps. When rounding
    /// prevents an exact landing the agent ends up just outside `[low, high]`.
    Oscillate { low: f64, high: f64 },
    /// Per-step table indexed from step 0.
    Scripted { steps: Vec<ScriptEntry> },
    /// Uniform random control in `[-scale, scale]`.
    Noise { scale: f64, seed: u64 },
    /// Jump to a uniform random position in `[low, high]` every step.
    RandomTarget { low: f64, high: f64, seed: u64 },
}

pub fn strategy_hold(position: f64) -> BuiltinStrategy {
    BuiltinStrategy::Hold {
        position: Some(position),
    }
}

pub fn strategy_oscillate(low: f64, high: f64) -> BuiltinStrategy {
    BuiltinStrategy::Oscillate { low, high }
}

pub fn strategy_scripted(steps: Vec<ScriptEntry>) -> BuiltinStrategy {
    BuiltinStrategy::Scripted { steps }
}

fn step_rng(seed: u64, agent: usize, step: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ ((agent as u64) << 40) ^ step as u64)
}

impl Strategy for BuiltinStrategy {
    fn control(&self, ctx: &StrategyContext<'_>) -> Result<f64> {
        let u = match self {
            BuiltinStrategy::Hold { position } => {
                let target = match position {
                    Some(p) => *p,
                    None => ctx
                        .history
                        .first()
                        .map(|x| x[ctx.agent])
                        .unwrap_or_else(|| ctx.position()),
                };
                // Dead-beat in two steps: reaches (target, 0) and then returns u = 0.
                let t = ctx.params.period;
                (target - ctx.position() - 1.5 * t * ctx.velocity()) / (t * t)
            }
            BuiltinStrategy::Oscillate { low, high } => {
                if (ctx.step + 1).is_multiple_of(2) {
                    ctx.control_to_reach_beyond(*low, false)
                } else {
                    ctx.control_to_reach_beyond(*high, true)
                }
            }
            BuiltinStrategy::Scripted { steps } => match steps.get(ctx.step) {
                Some(ScriptEntry::Control(u)) => *u,
                Some(ScriptEntry::Target(x)) => ctx.control_to_reach(*x),
                None => {
                    return Err(Error::Schedule(format!(
                        "script for agent {} has no entry for step {}",
                        ctx.agent + 1,
                        ctx.step
                    )))
                }
            },
            BuiltinStrategy::Noise { scale, seed } => {
                step_rng(*seed, ctx.agent, ctx.step).gen_range(-1.0..=1.0) * scale
            }
            BuiltinStrategy::RandomTarget { low, high, seed } => {
                let target = step_rng(*seed, ctx.agent, ctx.step).gen_range(*low..=*high);
                ctx.control_to_reach(target)
            }
        };
        if u.is_finite() {
            Ok(u)
        } else {
            Err(Error::NonFinite {
                agent: ctx.agent,
                step: ctx.step,
            })
        }
    }
}

/// The malicious set of a run together with the strategy of each member.
#[derive(Clone, Debug)]
pub struct Adversary {
    pub model: AdversaryModel,
    strategies: BTreeMap<usize, Arc<dyn Strategy>>,
}

impl Adversary {
    /// No malicious agents; the model bound is `f`.
    pub fn none(f: usize) -> Self {
        Adversary {
            model: AdversaryModel::total(f, NodeSet::new()),
            strategies: BTreeMap::new(),
        }
    }

    pub fn new(kind: ModelKind, f: usize) -> Self {
        Adversary {
            model: AdversaryModel {
                kind,
                f,
                malicious: NodeSet::new(),
            },
            strategies: BTreeMap::new(),
        }
    }

    pub fn with(mut self, agent: usize, strategy: impl Strategy + 'static) -> Self {
        self.insert(agent, Arc::new(strategy));
        self
    }

    pub fn insert(&mut self, agent: usize, strategy: Arc<dyn Strategy>) {
        self.model.malicious.insert(agent);
        self.strategies.insert(agent, strategy);
    }

    pub fn is_malicious(&self, agent: usize) -> bool {
        self.model.malicious.contains(&agent)
    }

    pub fn malicious(&self) -> &NodeSet {
        &self.model.malicious
    }

    pub fn strategy(&self, agent: usize) -> Option<&dyn Strategy> {
        self.strategies.get(&agent).map(|s| s.as_ref())
    }

    /// Errors when the malicious set violates the model on `g`.
    pub fn ensure_valid(&self, g: &Digraph) -> Result<()> {
        if validate_model(g, &self.model) {
            Ok(())
        } else {
            let kind = match self.model.kind {
                ModelKind::Total => "f-total",
                ModelKind::Local => "f-local",
            };
            Err(Error::Model(format!(
                "malicious set {:?} violates the {kind} bound f = {}",
                self.model.malicious.iter().map(|v| v + 1).collect::<Vec<_>>(),
                self.model.f
            )))
        }
    }

    pub(crate) fn control(&self, ctx: &StrategyContext<'_>) -> Result<f64> {
        let strategy = self.strategies.get(&ctx.agent).ok_or_else(|| {
            Error::Model(format!("malicious agent {} has no strategy", ctx.agent + 1))
        })?;
        strategy.control(ctx)
    }
}
