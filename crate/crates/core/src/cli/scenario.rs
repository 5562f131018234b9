//! Scenario files.
//!
//! A scenario is a TOML document with a `schema` version. Agents and nodes are
//! 1-indexed and positions are raw (offsets are subtracted on load). See the
//! bundled presets for complete examples.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adversary::{Adversary, BuiltinStrategy, ModelKind};
use crate::asyncsim::{
    freshness_warnings, run_async, AsyncTiming, DelayRule, DelaySchedule, HistoryBuffer, UpdateRule, UpdateSchedule,
};
use crate::dynamics::{NetworkState, SimParams};
use crate::error::{Error, Result};
use crate::graph::{
    build_chain, build_complete, build_edgeless, build_proposition_graph, build_random, build_ring, example_graph,
    Digraph, NodeSet, WeightPolicy,
};
use crate::metrics::{safety_interval_async, safety_interval_sync, SafetyInterval, DEFAULT_TAIL, DEFAULT_TOLERANCE};
use crate::msr::{run_sync, Setup};
use crate::trace::Trace;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Sync,
    Async,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSpec {
    pub period: f64,
    pub alpha: f64,
    /// Filter parameter: extreme values discarded per side.
    pub f: usize,
}

/// Exactly one of `generator`, `file` or `edges` must be given.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    /// `complete`, `chain`, `ring`, `edgeless`, `random`, `proposition` or `example`.
    pub generator: Option<String>,
    pub n: Option<usize>,
    /// Uniform edge weight; `1/n` when absent.
    pub weight: Option<f64>,
    /// Edge probability for `random`.
    pub p: Option<f64>,
    /// Block size for `proposition`.
    pub f: Option<usize>,
    /// Edge-list file, relative to the scenario file.
    pub file: Option<PathBuf>,
    /// Inline `[from, to, weight]` triples; needs `n`.
    pub edges: Option<Vec<(usize, usize, f64)>>,
    /// `[from, to]` pairs removed after construction.
    #[serde(default)]
    pub remove_edges: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    pub positions: Vec<f64>,
    pub velocities: Vec<f64>,
    #[serde(default)]
    pub offsets: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub agent: usize,
    pub strategy: BuiltinStrategy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversarySpec {
    #[serde(default = "default_model")]
    pub model: ModelKind,
    /// Bound on malicious agents; defaults to the filter parameter.
    pub f: Option<usize>,
    #[serde(default)]
    pub agents: Vec<AgentSpec>,
}

fn default_model() -> ModelKind {
    ModelKind::Total
}

impl Default for AdversarySpec {
    fn default() -> Self {
        AdversarySpec {
            model: ModelKind::Total,
            f: None,
            agents: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentRule {
    pub agent: usize,
    pub rule: UpdateRule,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeRule {
    pub from: usize,
    pub to: usize,
    pub rule: DelayRule,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingSpec {
    pub tau: usize,
    #[serde(default = "yes")]
    pub initial_update: bool,
    #[serde(default)]
    pub default_update: UpdateRule,
    #[serde(default)]
    pub updates: Vec<AgentRule>,
    #[serde(default)]
    pub default_delay: DelayRule,
    #[serde(default)]
    pub delays: Vec<EdgeRule>,
    /// Raw positions before step 0, most recent first.
    #[serde(default)]
    pub history: Option<Vec<Vec<f64>>>,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSpec {
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_tail")]
    pub tail: usize,
    /// Sorted final positions further apart than this start a new cluster.
    #[serde(default = "default_gap")]
    pub cluster_gap: f64,
}

fn default_tolerance() -> f64 {
    DEFAULT_TOLERANCE
}
fn default_tail() -> usize {
    DEFAULT_TAIL
}
fn default_gap() -> f64 {
    1.0
}

impl Default for AnalysisSpec {
    fn default() -> Self {
        AnalysisSpec {
            tolerance: DEFAULT_TOLERANCE,
            tail: DEFAULT_TAIL,
            cluster_gap: 1.0,
        }
    }
}

/// The parsed contents of a scenario file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema: u32,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub description: Option<String>,
    pub mode: Mode,
    pub horizon: usize,
    /// Seed for randomised graph generators.
    #[serde(default)]
    pub seed: u64,
    pub params: ParamsSpec,
    pub graph: GraphSpec,
    pub initial: InitialSpec,
    #[serde(default)]
    pub adversary: AdversarySpec,
    #[serde(default, rename = "async")]
    pub timing: Option<TimingSpec>,
    #[serde(default)]
    pub analysis: AnalysisSpec,
}

/// A validated, ready-to-run experiment.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub name: String,
    pub mode: Mode,
    pub setup: Setup,
    pub timing: Option<AsyncTiming>,
    pub analysis: AnalysisSpec,
    /// Freshness warnings found during validation.
    pub warnings: Vec<String>,
}

fn index(agent: usize, n: usize, what: &str) -> Result<usize> {
    if agent == 0 || agent > n {
        Err(Error::input(format!("{what} {agent} out of range 1..={n}")))
    } else {
        Ok(agent - 1)
    }
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Scenario> {
        let scenario: Scenario = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if scenario.schema != SCHEMA_VERSION {
            return Err(Error::input(format!(
                "unsupported schema {} (this build reads schema {SCHEMA_VERSION})",
                scenario.schema
            )));
        }
        Ok(scenario)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<(Scenario, PathBuf)> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((Scenario::from_toml(&text)?, base))
    }

    fn build_graph(&self, base_dir: &Path) -> Result<Digraph> {
        let spec = &self.graph;
        let sources = [spec.generator.is_some(), spec.file.is_some(), spec.edges.is_some()];
        if sources.iter().filter(|&&b| b).count() != 1 {
            return Err(Error::input("graph needs exactly one of `generator`, `file` or `edges`"));
        }
        let policy = spec.weight.map_or(WeightPolicy::InverseOrder, WeightPolicy::Uniform);
        let need_n = || spec.n.ok_or_else(|| Error::input("graph generator needs `n`"));
        let mut g = if let Some(generator) = &spec.generator {
            match generator.as_str() {
                "complete" => build_complete(need_n()?, policy)?,
                "chain" => build_chain(need_n()?, policy)?,
                "ring" => build_ring(need_n()?, policy)?,
                "edgeless" => build_edgeless(need_n()?)?,
                "random" => {
                    let p = spec.p.ok_or_else(|| Error::input("random graph needs `p`"))?;
                    let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                    build_random(need_n()?, p, policy, &mut rng)?
                }
                "proposition" => build_proposition_graph(spec.f.unwrap_or(self.params.f.max(1)))?,
                "example" => example_graph(),
                other => return Err(Error::input(format!("unknown graph generator {other:?}"))),
            }
        } else if let Some(file) = &spec.file {
            let path = base_dir.join(file);
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            Digraph::from_edge_list(&text)?
        } else {
            let n = need_n()?;
            let edges = spec.edges.as_deref().unwrap_or_default();
            let gamma = edges.iter().map(|e| e.2).fold(1.0 / n as f64, f64::min);
            let mut g = Digraph::with_gamma(n, gamma)?;
            for &(j, i, w) in edges {
                g.add_edge(index(j, n, "edge source")?, index(i, n, "edge target")?, w)?;
            }
            g
        };
        for &(j, i) in &spec.remove_edges {
            let n = g.node_count();
            if g.remove_edge(index(j, n, "edge source")?, index(i, n, "edge target")?).is_none() {
                return Err(Error::input(format!("cannot remove missing edge ({j}, {i})")));
            }
        }
        Ok(g)
    }

    /// Resolves the graph, strategies and schedules and runs every check
    /// that can be done before simulating.
    pub fn build(&self, base_dir: &Path) -> Result<Experiment> {
        let graph = self.build_graph(base_dir)?;
        let n = graph.node_count();
        let init = &self.initial;
        if init.positions.len() != n || init.velocities.len() != n {
            return Err(Error::input(format!(
                "initial state has {} positions and {} velocities for {n} agents",
                init.positions.len(),
                init.velocities.len()
            )));
        }
        let offsets = init.offsets.clone().unwrap_or_else(|| vec![0.0; n]);
        let initial = NetworkState::from_raw(&init.positions, init.velocities.clone(), offsets.clone())?;
        let params = SimParams::new(self.params.period, self.params.alpha, n, self.params.f);

        let bound = self.adversary.f.unwrap_or(self.params.f);
        let mut adversary = Adversary::new(self.adversary.model, bound);
        for a in &self.adversary.agents {
            let i = index(a.agent, n, "malicious agent")?;
            if adversary.is_malicious(i) {
                return Err(Error::input(format!("agent {} listed twice as malicious", a.agent)));
            }
            adversary = adversary.with(i, a.strategy.clone());
        }
        let setup = Setup {
            graph,
            params,
            initial,
            adversary,
            horizon: self.horizon,
        };
        setup.validate()?;

        let timing = match (self.mode, &self.timing) {
            (Mode::Sync, None) => None,
            (Mode::Sync, Some(_)) => return Err(Error::input("an [async] section needs mode = \"async\"")),
            (Mode::Async, None) => return Err(Error::input("mode = \"async\" needs an [async] section")),
            (Mode::Async, Some(t)) => Some(self.build_timing(t, n, &offsets)?),
        };
        let mut warnings = Vec::new();
        if let Some(t) = &timing {
            warnings = freshness_warnings(t, &setup.graph, &setup.normal_agents(), setup.horizon)?;
        }
        if !(self.analysis.tolerance > 0.0) || self.analysis.tail == 0 {
            return Err(Error::input("analysis needs tolerance > 0 and tail >= 1"));
        }
        Ok(Experiment {
            name: self.name.clone().unwrap_or_else(|| "scenario".into()),
            mode: self.mode,
            setup,
            timing,
            analysis: self.analysis.clone(),
            warnings,
        })
    }

    fn build_timing(&self, t: &TimingSpec, n: usize, offsets: &[f64]) -> Result<AsyncTiming> {
        let mut updates = UpdateSchedule::new(t.default_update.clone());
        updates.initial_update = t.initial_update;
        for r in &t.updates {
            updates = updates.with(index(r.agent, n, "update agent")?, r.rule.clone());
        }
        let mut delays = DelaySchedule::new(t.tau, t.default_delay.clone());
        for r in &t.delays {
            delays = delays.with_edge(index(r.from, n, "delay source")?, index(r.to, n, "delay target")?, r.rule.clone());
        }
        let history = match &t.history {
            None => None,
            Some(rows) => Some(
                rows.iter()
                    .map(|row| {
                        if row.len() != n {
                            return Err(Error::input(format!("history row has {} entries for {n} agents", row.len())));
                        }
                        Ok(row.iter().zip(offsets).map(|(x, d)| x - d).collect())
                    })
                    .collect::<Result<Vec<Vec<f64>>>>()?,
            ),
        };
        Ok(AsyncTiming {
            delays,
            updates,
            history,
            graphs: None,
        })
    }
}

impl Experiment {
    pub fn run(&self) -> Result<Trace> {
        match &self.timing {
            None => run_sync(&self.setup),
            Some(t) => run_async(&self.setup, t),
        }
    }

    pub fn normal_agents(&self) -> NodeSet {
        self.setup.normal_agents()
    }

    /// The safety interval over the given agents: the one-step form for
    /// synchronous runs, the delayed-history form for asynchronous ones.
    pub fn interval_over(&self, agents: &NodeSet) -> Result<SafetyInterval> {
        let s0 = &self.setup.initial;
        match &self.timing {
            None => safety_interval_sync(s0, &self.setup.params, agents),
            Some(t) => {
                let z0 = HistoryBuffer::new(&s0.positions, t.tau(), t.history.as_deref());
                safety_interval_async(&z0, &s0.velocities, &self.setup.params, agents)
            }
        }
    }

    pub fn safety_interval(&self) -> Result<SafetyInterval> {
        self.interval_over(&self.normal_agents())
    }

    /// Window of the monotone envelopes: 2 steps synchronous, `tau + 2` asynchronous.
    pub fn envelope_depth(&self) -> usize {
        self.timing.as_ref().map_or(2, |t| t.tau() + 2)
    }
}
