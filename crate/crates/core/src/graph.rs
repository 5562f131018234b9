//! Weighted directed graphs and the exact (r,s)-robustness decision procedure.
//!
//! An edge `(j, i)` means node `i` receives information from node `j`, with
//! weight `a_ij`. Nodes are 0-indexed in the API; the edge-list text format is
//! 1-indexed.
//!
//! Robustness is decided by exhaustive enumeration of all unordered pairs of
//! nonempty disjoint node sets. Each node is assigned to `S1`, `S2` or neither
//! by a base-3 counter (node 0 is the least significant digit); a pair is kept
//! only when `min(S1) < min(S2)`, so every unordered pair is visited exactly
//! once and the first violating pair in counter order is the witness.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;
use std::ops::Range;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

pub type NodeSet = BTreeSet<usize>;

/// Default upper bound on the node count accepted by the robustness checker.
pub const DEFAULT_ENUMERATION_LIMIT: usize = 20;

const ROW_SUM_SLACK: f64 = 1e-12;

/// How generators assign edge weights.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum WeightPolicy {
    /// `a_ij = 1/n` for every edge; `gamma = 1/n`.
    #[default]
    InverseOrder,
    /// The same weight on every edge.
    Uniform(f64),
}

impl WeightPolicy {
    pub fn weight(&self, n: usize) -> f64 {
        match *self {
            WeightPolicy::InverseOrder => 1.0 / n as f64,
            WeightPolicy::Uniform(w) => w,
        }
    }
}

/// Weighted digraph with the constraints the consensus dynamics rely on:
/// no self-loops, weights in `[gamma, 1)`, and incoming weights summing to at
/// most one at every node.
#[derive(Clone, Debug, PartialEq)]
pub struct Digraph {
    n: usize,
    gamma: f64,
    in_edges: Vec<BTreeMap<usize, f64>>,
}

impl Digraph {
    /// Edgeless graph on `n` nodes with `gamma = 1/n`.
    pub fn new(n: usize) -> Result<Self> {
        Self::with_gamma(n, 1.0 / n.max(1) as f64)
    }

    pub fn with_gamma(n: usize, gamma: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::input(format!("a graph needs at least 2 nodes, got {n}")));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::input(format!("gamma must lie in (0, 1), got {gamma}")));
        }
        Ok(Digraph {
            n,
            gamma,
            in_edges: vec![BTreeMap::new(); n],
        })
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Adds edge `(from, to)`: node `to` receives from node `from` with weight `weight`.
    pub fn add_edge(&mut self, from: usize, to: usize, weight: f64) -> Result<()> {
        self.check_node(from)?;
        self.check_node(to)?;
        if from == to {
            return Err(Error::input(format!("self-loop at node {}", from + 1)));
        }
        if !(weight >= self.gamma && weight < 1.0) {
            return Err(Error::input(format!(
                "weight {weight} of edge ({}, {}) outside [{}, 1)",
                from + 1,
                to + 1,
                self.gamma
            )));
        }
        let row = &self.in_edges[to];
        let current: f64 = row.iter().filter(|(&j, _)| j != from).map(|(_, w)| w).sum();
        if current + weight > 1.0 + ROW_SUM_SLACK {
            return Err(Error::input(format!(
                "incoming weights of node {} would sum to {} > 1",
                to + 1,
                current + weight
            )));
        }
        self.in_edges[to].insert(from, weight);
        Ok(())
    }

    pub fn remove_edge(&mut self, from: usize, to: usize) -> Option<f64> {
        self.in_edges.get_mut(to)?.remove(&from)
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.weight(from, to).is_some()
    }

    pub fn weight(&self, from: usize, to: usize) -> Option<f64> {
        self.in_edges.get(to)?.get(&from).copied()
    }

    /// In-neighbors of `node` with their weights, ascending by index.
    pub fn in_neighbors(&self, node: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.in_edges[node].iter().map(|(&j, &w)| (j, w))
    }

    pub fn in_degree(&self, node: usize) -> usize {
        self.in_edges[node].len()
    }

    pub fn edge_count(&self) -> usize {
        self.in_edges.iter().map(BTreeMap::len).sum()
    }

    /// All edges as `(from, to, weight)`, ordered by receiving node then sender.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.in_edges
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().map(move |(&j, &w)| (j, i, w)))
    }

    /// Subgraph keeping, for every node, only the listed incoming edges.
    pub fn restricted(&self, kept: &[NodeSet]) -> Result<Digraph> {
        if kept.len() != self.n {
            return Err(Error::input("one kept-set per node required"));
        }
        let mut g = Digraph {
            n: self.n,
            gamma: self.gamma,
            in_edges: vec![BTreeMap::new(); self.n],
        };
        for (i, set) in kept.iter().enumerate() {
            for &j in set {
                let w = self.weight(j, i).ok_or_else(|| {
                    Error::input(format!("edge ({}, {}) not in graph", j + 1, i + 1))
                })?;
                g.in_edges[i].insert(j, w);
            }
        }
        Ok(g)
    }

    pub fn adjacency(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n, self.n);
        for (j, i, w) in self.edges() {
            a[(i, j)] = w;
        }
        a
    }

    /// `L = D - A` with `l_ii = sum_j a_ij` and `l_ij = -a_ij`.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let mut l = -self.adjacency();
        for i in 0..self.n {
            l[(i, i)] = self.in_edges[i].values().sum();
        }
        l
    }

    pub(crate) fn in_masks(&self) -> Vec<u64> {
        self.in_edges
            .iter()
            .map(|row| row.keys().fold(0u64, |m, &j| m | (1 << j)))
            .collect()
    }

    fn check_node(&self, v: usize) -> Result<()> {
        if v >= self.n {
            Err(Error::input(format!("node index {} out of range 1..={}", v + 1, self.n)))
        } else {
            Ok(())
        }
    }

    /// Parses the edge-list format: `n` on the first line, then `j i weight` per
    /// line (1-indexed, `i` receives from `j`). `#` starts a comment.
    pub fn from_edge_list(text: &str) -> Result<Digraph> {
        let mut lines = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .enumerate()
            .filter(|(_, l)| !l.is_empty());
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::Parse("empty edge list".into()))?;
        let n: usize = header
            .parse()
            .map_err(|_| Error::Parse(format!("bad node count {header:?}")))?;
        let mut edges = Vec::new();
        for (lineno, line) in lines {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(Error::Parse(format!(
                    "line {}: expected `j i weight`, got {line:?}",
                    lineno + 1
                )));
            }
            let parse_node = |s: &str| -> Result<usize> {
                match s.parse::<usize>() {
                    Ok(v) if v >= 1 => Ok(v - 1),
                    _ => Err(Error::Parse(format!("line {}: bad node {s:?}", lineno + 1))),
                }
            };
            let j = parse_node(fields[0])?;
            let i = parse_node(fields[1])?;
            let w: f64 = fields[2]
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: bad weight {:?}", lineno + 1, fields[2])))?;
            edges.push((j, i, w));
        }
        let gamma = edges
            .iter()
            .map(|e| e.2)
            .fold(f64::INFINITY, f64::min)
            .min(1.0 / n.max(1) as f64);
        let mut g = Digraph::with_gamma(n, gamma)?;
        for (j, i, w) in edges {
            g.add_edge(j, i, w)?;
        }
        Ok(g)
    }

    pub fn to_edge_list(&self) -> String {
        let mut out = format!("{}\n", self.n);
        for (j, i, w) in self.edges() {
            let _ = writeln!(out, "{} {} {}", j + 1, i + 1, w);
        }
        out
    }

    /// Graphviz rendering, nodes labelled 1-indexed.
    pub fn to_dot(&self, name: &str) -> String {
        let mut out = format!("digraph \"{name}\" {{\n");
        for v in 0..self.n {
            let _ = writeln!(out, "  {};", v + 1);
        }
        for (j, i, w) in self.edges() {
            let _ = writeln!(out, "  {} -> {} [label=\"{w}\"];", j + 1, i + 1);
        }
        out.push_str("}\n");
        out
    }
}

/// Result of an (r,s)-robustness query.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RobustnessReport {
    pub r: usize,
    pub s: usize,
    pub holds: bool,
    /// First violating pair `(S1, S2)` in enumeration order, when `holds` is false.
    pub witness: Option<(NodeSet, NodeSet)>,
}

/// `X^r_S`: the nodes of `set` with at least `r` in-neighbors outside `set`.
pub fn reachable_set(g: &Digraph, set: &NodeSet, r: usize) -> Result<NodeSet> {
    for &v in set {
        g.check_node(v)?;
    }
    Ok(set
        .iter()
        .copied()
        .filter(|&i| g.in_neighbors(i).filter(|(j, _)| !set.contains(j)).count() >= r)
        .collect())
}

/// Whether `(s1, s2)` violates all three conditions of (r,s)-robustness.
pub fn pair_violates(g: &Digraph, s1: &NodeSet, s2: &NodeSet, r: usize, s: usize) -> Result<bool> {
    if s1.is_empty() || s2.is_empty() || !s1.is_disjoint(s2) {
        return Err(Error::input("witness sets must be nonempty and disjoint"));
    }
    let x1 = reachable_set(g, s1, r)?;
    let x2 = reachable_set(g, s2, r)?;
    Ok(x1.len() < s1.len() && x2.len() < s2.len() && x1.len() + x2.len() < s)
}

/// Exact (r,s)-robustness checker with a configurable size guard.
#[derive(Clone, Copy, Debug)]
pub struct RobustnessChecker {
    pub max_nodes: usize,
}

impl Default for RobustnessChecker {
    fn default() -> Self {
        RobustnessChecker {
            max_nodes: DEFAULT_ENUMERATION_LIMIT,
        }
    }
}

impl RobustnessChecker {
    pub fn check(&self, g: &Digraph, r: usize, s: usize) -> Result<RobustnessReport> {
        let violation = self.first_violation(g.node_count(), &g.in_masks(), r, s)?;
        Ok(RobustnessReport {
            r,
            s,
            holds: violation.is_none(),
            witness: violation.map(|(a, b)| (mask_to_set(a), mask_to_set(b))),
        })
    }

    fn first_violation(&self, n: usize, in_masks: &[u64], r: usize, s: usize) -> Result<Option<(u64, u64)>> {
        if n > self.max_nodes || n > 40 {
            return Err(Error::TooLarge {
                n,
                limit: self.max_nodes.min(40),
            });
        }
        if s == 0 {
            return Err(Error::input("s must be at least 1"));
        }
        let total = 3u64.pow(n as u32);
        // Small graphs stay on the calling thread.
        if n <= 10 {
            return Ok(scan_assignments(n, in_masks, r, s, 0..total));
        }
        let chunk = 3u64.pow(9);
        let chunks = total.div_ceil(chunk);
        Ok((0..chunks).into_par_iter().find_map_first(|c| {
            let start = c * chunk;
            scan_assignments(n, in_masks, r, s, start..(start + chunk).min(total))
        }))
    }
}

fn scan_assignments(n: usize, in_masks: &[u64], r: usize, s: usize, range: Range<u64>) -> Option<(u64, u64)> {
    if range.is_empty() {
        return None;
    }
    // Decode the first counter, then advance as a base-3 odometer.
    let mut digits = vec![0u8; n];
    let (mut s1, mut s2) = (0u64, 0u64);
    let mut c = range.start;
    for (v, d) in digits.iter_mut().enumerate() {
        *d = (c % 3) as u8;
        c /= 3;
        match *d {
            1 => s1 |= 1 << v,
            2 => s2 |= 1 << v,
            _ => {}
        }
    }
    for _ in range {
        if s1 != 0 && s2 != 0 && s1.trailing_zeros() < s2.trailing_zeros() && violates(in_masks, s1, s2, r, s) {
            return Some((s1, s2));
        }
        for (v, d) in digits.iter_mut().enumerate() {
            let bit = 1u64 << v;
            match *d {
                0 => {
                    *d = 1;
                    s1 |= bit;
                    break;
                }
                1 => {
                    *d = 2;
                    s1 &= !bit;
                    s2 |= bit;
                    break;
                }
                _ => {
                    *d = 0;
                    s2 &= !bit;
                }
            }
        }
    }
    None
}

fn reachable_count(in_masks: &[u64], set: u64, r: usize) -> u32 {
    let mut count = 0;
    let mut rest = set;
    while rest != 0 {
        let i = rest.trailing_zeros() as usize;
        rest &= rest - 1;
        if (in_masks[i] & !set).count_ones() as usize >= r {
            count += 1;
        }
    }
    count
}

fn violates(in_masks: &[u64], s1: u64, s2: u64, r: usize, s: usize) -> bool {
    let x1 = reachable_count(in_masks, s1, r);
    let x2 = reachable_count(in_masks, s2, r);
    x1 < s1.count_ones() && x2 < s2.count_ones() && ((x1 + x2) as usize) < s
}

fn mask_to_set(mask: u64) -> NodeSet {
    (0..64).filter(|v| mask & (1 << v) != 0).collect()
}

pub fn is_rs_robust(g: &Digraph, r: usize, s: usize) -> Result<RobustnessReport> {
    RobustnessChecker::default().check(g, r, s)
}

pub fn is_r_robust(g: &Digraph, r: usize) -> Result<RobustnessReport> {
    is_rs_robust(g, r, 1)
}

/// Time-indexed graphs over a common node set.
#[derive(Clone, Debug)]
pub struct GraphSequence {
    pub horizon: usize,
    graphs: Vec<Digraph>,
}

impl GraphSequence {
    pub fn new(graphs: Vec<Digraph>, horizon: usize) -> Result<Self> {
        let first = graphs
            .first()
            .ok_or_else(|| Error::input("graph sequence is empty"))?
            .node_count();
        if graphs.iter().any(|g| g.node_count() != first) {
            return Err(Error::input("graphs in a sequence must share the node count"));
        }
        Ok(GraphSequence { horizon, graphs })
    }

    pub fn graphs(&self) -> &[Digraph] {
        &self.graphs
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }
}

/// True iff the edge union over every window `[k, k+h-1]` is r-robust.
pub fn is_jointly_robust(seq: &GraphSequence, r: usize, h: usize) -> Result<bool> {
    if h == 0 || h > seq.len() {
        return Err(Error::input(format!(
            "window {h} does not fit a sequence of length {}",
            seq.len()
        )));
    }
    let n = seq.graphs[0].node_count();
    let masks: Vec<Vec<u64>> = seq.graphs.iter().map(Digraph::in_masks).collect();
    let checker = RobustnessChecker::default();
    for window in masks.windows(h) {
        let union: Vec<u64> = (0..n).map(|i| window.iter().fold(0, |m, g| m | g[i])).collect();
        if checker.first_violation(n, &union, r, 1)?.is_some() {
            return Ok(false);
        }
    }
    Ok(true)
}

/// True iff some node reaches every other node along directed edges.
pub fn has_directed_spanning_tree(g: &Digraph) -> bool {
    let n = g.node_count();
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (j, i, _) in g.edges() {
        out[j].push(i);
    }
    (0..n).any(|root| {
        let mut seen = vec![false; n];
        seen[root] = true;
        let mut queue = VecDeque::from([root]);
        let mut count = 1;
        while let Some(v) = queue.pop_front() {
            for &w in &out[v] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    queue.push_back(w);
                }
            }
        }
        count == n
    })
}

fn graph_for_policy(n: usize, policy: WeightPolicy) -> Result<Digraph> {
    let w = policy.weight(n);
    Digraph::with_gamma(n, w.min(1.0 / n as f64).max(f64::MIN_POSITIVE))
}

pub fn build_complete(n: usize, policy: WeightPolicy) -> Result<Digraph> {
    let mut g = graph_for_policy(n, policy)?;
    let w = policy.weight(n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                g.add_edge(j, i, w)?;
            }
        }
    }
    Ok(g)
}

pub fn build_edgeless(n: usize) -> Result<Digraph> {
    Digraph::new(n)
}

/// Directed chain `0 -> 1 -> ... -> n-1`.
pub fn build_chain(n: usize, policy: WeightPolicy) -> Result<Digraph> {
    let mut g = graph_for_policy(n, policy)?;
    for v in 1..n {
        g.add_edge(v - 1, v, policy.weight(n))?;
    }
    Ok(g)
}

/// Undirected ring (each node receives from both ring neighbours).
pub fn build_ring(n: usize, policy: WeightPolicy) -> Result<Digraph> {
    let mut g = graph_for_policy(n, policy)?;
    let w = policy.weight(n);
    for v in 0..n {
        let next = (v + 1) % n;
        if !g.has_edge(v, next) {
            g.add_edge(v, next, w)?;
        }
        if !g.has_edge(next, v) {
            g.add_edge(next, v, w)?;
        }
    }
    Ok(g)
}

/// Each ordered pair is an edge independently with probability `p`.
pub fn build_random<R: Rng>(n: usize, p: f64, policy: WeightPolicy, rng: &mut R) -> Result<Digraph> {
    let mut g = graph_for_policy(n, policy)?;
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.gen_bool(p.clamp(0.0, 1.0)) {
                g.add_edge(j, i, policy.weight(n))?;
            }
        }
    }
    Ok(g)
}

/// Node ranges of the four complete blocks of the two-cluster counterexample
/// graph: `G1` (4f nodes), then `G2`, `G3`, `G4` (f nodes each).
pub fn proposition_groups(f: usize) -> [Range<usize>; 4] {
    [0..4 * f, 4 * f..5 * f, 5 * f..6 * f, 6 * f..7 * f]
}

/// Four internally complete blocks. Each `G2` node receives from the first 2f
/// `G1` nodes; each `G3` node from the first f `G1` nodes and every `G2` node;
/// each `G4` node from every `G1` and every `G2` node. Weights are `1/n`.
pub fn build_proposition_graph(f: usize) -> Result<Digraph> {
    if f == 0 {
        return Err(Error::input("f must be at least 1"));
    }
    let [g1, g2, g3, g4] = proposition_groups(f);
    let n = 7 * f;
    let w = 1.0 / n as f64;
    let mut g = Digraph::new(n)?;
    for block in [&g1, &g2, &g3, &g4] {
        for i in block.clone() {
            for j in block.clone() {
                if i != j {
                    g.add_edge(j, i, w)?;
                }
            }
        }
    }
    for i in g2.clone() {
        for j in g1.start..g1.start + 2 * f {
            g.add_edge(j, i, w)?;
        }
    }
    for i in g3 {
        for j in (g1.start..g1.start + f).chain(g2.clone()) {
            g.add_edge(j, i, w)?;
        }
    }
    for i in g4 {
        for j in g1.clone().chain(g2.clone()) {
            g.add_edge(j, i, w)?;
        }
    }
    Ok(g)
}

/// Edge list of the bundled five-node example graph.
pub const EXAMPLE_GRAPH: &str = include_str!("../data/example5.edges");

/// The bundled five-node example: (2,2)-robust, not 3-robust, node 5 has
/// in-neighbours {1, 2, 4}, and dropping edge 2 -> 5 breaks (2,2)-robustness.
/// All weights are 0.25.
pub fn example_graph() -> Digraph {
    Digraph::from_edge_list(EXAMPLE_GRAPH).expect("bundled graph parses")
}

/// Extra requirements for [`find_rs_robust_example`].
pub struct SearchConstraints<'a> {
    pub required_edges: Vec<(usize, usize)>,
    pub forbidden_edges: Vec<(usize, usize)>,
    /// `(node, in-degree)` pairs that must hold exactly.
    pub exact_in_degree: Vec<(usize, usize)>,
    /// Edges whose removal must destroy (r,s)-robustness.
    pub critical_edges: Vec<(usize, usize)>,
    pub exclude_complete: bool,
    pub weights: WeightPolicy,
    /// Final predicate applied to otherwise admissible graphs.
    pub accept: Option<&'a (dyn Fn(&Digraph) -> bool + Sync)>,
    /// Number of random samples when the space is too large to enumerate.
    pub budget: usize,
    pub seed: u64,
}

impl Default for SearchConstraints<'_> {
    fn default() -> Self {
        SearchConstraints {
            required_edges: Vec::new(),
            forbidden_edges: Vec::new(),
            exact_in_degree: Vec::new(),
            critical_edges: Vec::new(),
            exclude_complete: false,
            weights: WeightPolicy::InverseOrder,
            accept: None,
            budget: 200_000,
            seed: 0,
        }
    }
}

/// Largest node count whose digraphs are enumerated exhaustively (2^20 graphs).
const EXHAUSTIVE_SEARCH_NODES: usize = 5;

/// Searches for an n-node digraph that is (r,s)-robust but not (r+1)-robust
/// and satisfies `constraints`. Graphs with `n <= 5` are enumerated in
/// ascending edge-mask order (the first admissible one is returned); larger
/// `n` are sampled at random within `constraints.budget`.
pub fn find_rs_robust_example(n: usize, r: usize, s: usize, constraints: &SearchConstraints) -> Result<Option<Digraph>> {
    if n > 8 {
        return Err(Error::input("example search supports at most 8 nodes"));
    }
    if n < 2 || r >= n || s >= n || s == 0 {
        return Ok(None);
    }
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (j, i)))
        .collect();
    let bit = |e: &(usize, usize)| pairs.iter().position(|p| p == e).map(|p| 1u64 << p);
    let mut required = 0u64;
    for e in &constraints.required_edges {
        required |= bit(e).ok_or_else(|| Error::input("required edge out of range"))?;
    }
    let mut forbidden = 0u64;
    for e in &constraints.forbidden_edges {
        forbidden |= bit(e).ok_or_else(|| Error::input("forbidden edge out of range"))?;
    }
    let all = (1u64 << pairs.len()) - 1;
    let checker = RobustnessChecker::default();
    let w = constraints.weights.weight(n);

    let admissible = |mask: u64| -> Option<Digraph> {
        if mask & required != required || mask & forbidden != 0 {
            return None;
        }
        if constraints.exclude_complete && mask == all {
            return None;
        }
        let mut in_masks = vec![0u64; n];
        for (b, &(j, i)) in pairs.iter().enumerate() {
            if mask & (1 << b) != 0 {
                in_masks[i] |= 1 << j;
            }
        }
        if constraints
            .exact_in_degree
            .iter()
            .any(|&(v, d)| v >= n || in_masks[v].count_ones() as usize != d)
        {
            return None;
        }
        if in_masks.iter().any(|m| m.count_ones() as f64 * w > 1.0 + ROW_SUM_SLACK) {
            return None;
        }
        if checker.first_violation(n, &in_masks, r, s).ok()?.is_some() {
            return None;
        }
        if checker.first_violation(n, &in_masks, r + 1, 1).ok()?.is_none() {
            return None;
        }
        for &(j, i) in &constraints.critical_edges {
            let mut reduced = in_masks.clone();
            reduced[i] &= !(1 << j);
            if checker.first_violation(n, &reduced, r, s).ok()?.is_none() {
                return None;
            }
        }
        let mut g = graph_for_policy(n, constraints.weights).ok()?;
        for (b, &(j, i)) in pairs.iter().enumerate() {
            if mask & (1 << b) != 0 {
                g.add_edge(j, i, w).ok()?;
            }
        }
        match constraints.accept {
            Some(pred) if !pred(&g) => None,
            _ => Some(g),
        }
    };

    if n <= EXHAUSTIVE_SEARCH_NODES {
        let masks: Vec<u64> = (0..=all).collect();
        return Ok(masks.par_iter().find_map_first(|&m| admissible(m)));
    }
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(constraints.seed);
    for _ in 0..constraints.budget {
        let mask = rng.gen::<u64>() & all;
        if let Some(g) = admissible(mask) {
            return Ok(Some(g));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(v: &[usize]) -> NodeSet {
        v.iter().copied().collect()
    }

    #[test]
    fn reachable_set_complete_graph() {
        let k5 = build_complete(5, WeightPolicy::InverseOrder).unwrap();
        assert_eq!(reachable_set(&k5, &set(&[0, 1]), 3).unwrap(), set(&[0, 1]));
        assert!(reachable_set(&k5, &set(&[0, 1, 2, 3, 4]), 1).unwrap().is_empty());
        assert!(reachable_set(&k5, &set(&[7]), 1).is_err());
    }

    #[test]
    fn reachable_set_proposition_g3() {
        let g = build_proposition_graph(1).unwrap();
        let g3: NodeSet = proposition_groups(1)[2].clone().collect();
        assert!(reachable_set(&g, &g3, 3).unwrap().is_empty());
        assert_eq!(reachable_set(&g, &g3, 2).unwrap(), g3);
    }

    #[test]
    fn complete_graph_construction() {
        let k5 = build_complete(5, WeightPolicy::InverseOrder).unwrap();
        assert_eq!(k5.edge_count(), 20);
        assert!(k5.edges().all(|(_, _, w)| w == 0.2));
        assert_eq!(build_complete(2, WeightPolicy::InverseOrder).unwrap().edge_count(), 2);
        assert!(build_complete(1, WeightPolicy::InverseOrder).is_err());
    }

    #[test]
    fn complete_graph_robustness() {
        let k5 = build_complete(5, WeightPolicy::InverseOrder).unwrap();
        assert!(is_rs_robust(&k5, 3, 5).unwrap().holds);
        assert!(is_r_robust(&k5, 3).unwrap().holds);
        let report = is_r_robust(&k5, 4).unwrap();
        assert!(!report.holds);
        let (a, b) = report.witness.unwrap();
        assert!(pair_violates(&k5, &a, &b, 4, 1).unwrap());
    }

    #[test]
    fn edgeless_is_not_1_robust() {
        let g = build_edgeless(4).unwrap();
        let report = is_r_robust(&g, 1).unwrap();
        assert!(!report.holds);
        assert_eq!(report.witness, Some((set(&[0]), set(&[1]))));
    }

    #[test]
    fn weight_invariants_enforced() {
        let mut g = Digraph::new(3).unwrap();
        assert!(g.add_edge(0, 0, 0.5).is_err());
        assert!(g.add_edge(0, 1, 1.0).is_err());
        assert!(g.add_edge(0, 1, 0.1).is_err());
        g.add_edge(0, 1, 0.6).unwrap();
        assert!(g.add_edge(2, 1, 0.6).is_err());
        g.add_edge(2, 1, 0.4).unwrap();
        // Replacing an existing weight does not double count it.
        g.add_edge(0, 1, 0.5).unwrap();
    }

    #[test]
    fn proposition_graph_shape() {
        let g = build_proposition_graph(1).unwrap();
        assert_eq!(g.node_count(), 7);
        let min_deg = (0..7).map(|v| g.in_degree(v)).min().unwrap();
        assert_eq!(min_deg, 2);
        let g2 = build_proposition_graph(2).unwrap();
        assert_eq!(g2.node_count(), 14);
        for v in proposition_groups(2)[3].clone() {
            assert_eq!(g2.in_degree(v), 11);
        }
        assert_eq!((0..14).map(|v| g2.in_degree(v)).min().unwrap(), 5);
    }

    #[test]
    fn proposition_graph_robustness() {
        let g = build_proposition_graph(1).unwrap();
        assert!(is_r_robust(&g, 2).unwrap().holds);
        assert!(!is_r_robust(&g, 3).unwrap().holds);
        // Three G1 nodes hear only the fourth from outside, and of G2 and G3
        // only G2 has two outside in-neighbours.
        let report = is_rs_robust(&g, 2, 2).unwrap();
        assert!(!report.holds);
        let (s1, s2) = report.witness.unwrap();
        assert!(pair_violates(&g, &s1, &s2, 2, 2).unwrap());
        let s1: NodeSet = [1, 2, 3].into_iter().collect();
        let s2: NodeSet = [4, 5].into_iter().collect();
        assert!(pair_violates(&g, &s1, &s2, 2, 2).unwrap());
    }

    #[test]
    fn spanning_tree() {
        let chain = build_chain(3, WeightPolicy::InverseOrder).unwrap();
        assert!(has_directed_spanning_tree(&chain));
        assert!(!has_directed_spanning_tree(&build_edgeless(2).unwrap()));
    }

    #[test]
    fn jointly_robust_windows() {
        let k5 = build_complete(5, WeightPolicy::InverseOrder).unwrap();
        let mut upper = Digraph::new(5).unwrap();
        let mut lower = Digraph::new(5).unwrap();
        for (j, i, w) in k5.edges() {
            if j < i {
                upper.add_edge(j, i, w).unwrap();
            } else {
                lower.add_edge(j, i, w).unwrap();
            }
        }
        let alternating = GraphSequence::new(vec![upper.clone(), lower.clone(), upper.clone(), lower], 2).unwrap();
        assert!(is_jointly_robust(&alternating, 3, 2).unwrap());
        assert!(!is_jointly_robust(&alternating, 3, 1).unwrap());

        let constant = GraphSequence::new(vec![k5.clone(); 4], 3).unwrap();
        for h in 1..=4 {
            assert!(is_jointly_robust(&constant, 3, h).unwrap());
        }
        let empty = Digraph::new(5).unwrap();
        let gap = GraphSequence::new(vec![k5.clone(), empty.clone(), empty, k5], 2).unwrap();
        assert!(!is_jointly_robust(&gap, 1, 2).unwrap());
        assert!(is_jointly_robust(&gap, 1, 5).is_err());
    }

    #[test]
    fn size_guard() {
        let g = Digraph::new(21).unwrap();
        assert!(matches!(is_r_robust(&g, 1), Err(Error::TooLarge { n: 21, .. })));
        let small_guard = RobustnessChecker { max_nodes: 4 };
        assert!(small_guard.check(&Digraph::new(5).unwrap(), 1, 1).is_err());
    }

    #[test]
    fn edge_list_round_trip_and_dot() {
        let text = "# five node example\n3\n1 2 0.25\n3 2 0.5\n\n2 1 0.3\n";
        let g = Digraph::from_edge_list(text).unwrap();
        assert_eq!(g.edge_count(), 3);
        assert_eq!(g.weight(0, 1), Some(0.25));
        let again = Digraph::from_edge_list(&g.to_edge_list()).unwrap();
        assert_eq!(again.adjacency(), g.adjacency());
        assert!(g.to_dot("g").contains("1 -> 2"));
        assert!(Digraph::from_edge_list("3\n1 1 0.2\n").is_err());
        assert!(Digraph::from_edge_list("3\n0 1 0.2\n").is_err());
        assert!(Digraph::from_edge_list("3\n1 2\n").is_err());
    }

    #[test]
    fn laplacian_rows_sum_to_zero() {
        let g = build_proposition_graph(1).unwrap();
        let l = g.laplacian();
        for i in 0..7 {
            assert!(l.row(i).sum().abs() < 1e-15);
        }
    }

    #[test]
    fn bundled_example_graph() {
        let g = example_graph();
        assert!(is_rs_robust(&g, 2, 2).unwrap().holds);
        assert!(!is_r_robust(&g, 3).unwrap().holds);
        assert_eq!(g.in_neighbors(4).map(|(j, _)| j).collect::<Vec<_>>(), vec![0, 1, 3]);
        let mut cut = g.clone();
        cut.remove_edge(1, 4);
        assert!(!is_rs_robust(&cut, 2, 2).unwrap().holds);
    }

    #[test]
    fn search_examples() {
        let found = find_rs_robust_example(5, 2, 2, &SearchConstraints::default())
            .unwrap()
            .unwrap();
        assert!(is_rs_robust(&found, 2, 2).unwrap().holds);
        assert!(!is_r_robust(&found, 3).unwrap().holds);

        assert!(find_rs_robust_example(2, 2, 2, &SearchConstraints::default()).unwrap().is_none());

        let not_complete = SearchConstraints {
            exclude_complete: true,
            ..Default::default()
        };
        // Four-robustness is out of reach on five nodes, so any 3-robust
        // graph qualifies; K5 minus one edge is one.
        let sparse = find_rs_robust_example(5, 3, 1, &not_complete).unwrap().unwrap();
        assert!(sparse.edge_count() < 20);
        assert!(is_r_robust(&sparse, 3).unwrap().holds);
    }
}
