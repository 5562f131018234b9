//! Shared fixtures and random scenario generators for the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use resilient_consensus::adversary::{strategy_hold, strategy_oscillate};
use resilient_consensus::graph::{example_graph, RobustnessChecker};
use resilient_consensus::*;

pub const PERIOD: f64 = 0.3;
pub const ALPHA: f64 = 3.67;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// The synchronous experiment on the bundled graph: agent 1 holds at 10.
pub fn sync_example(graph: Digraph, f: usize, horizon: usize) -> Setup {
    Setup {
        graph,
        params: SimParams::new(PERIOD, ALPHA, 5, f),
        initial: NetworkState::new(vec![10.0, 4.0, 2.5, 1.0, 8.0], vec![0.0, -6.0, -5.0, 1.0, 4.0]).unwrap(),
        adversary: Adversary::none(1).with(0, strategy_hold(10.0)),
        horizon,
    }
}

/// The asynchronous experiment: agent 4 oscillates between 2 and 9 and the
/// normal agents update every 12 steps at different phases.
pub fn async_example(graph: Digraph, horizon: usize) -> (Setup, AsyncTiming) {
    let setup = Setup {
        graph,
        params: SimParams::new(PERIOD, ALPHA, 5, 1),
        initial: NetworkState::new(vec![4.0, 10.0, 8.0, 9.0, 1.0], vec![0.0, -1.0, -1.0, 4.0, 3.0]).unwrap(),
        adversary: Adversary::none(1).with(3, strategy_oscillate(2.0, 9.0)),
        horizon,
    };
    let mut updates = UpdateSchedule::new(UpdateRule::Always);
    for (agent, phase) in [(0, 6), (1, 9), (2, 11), (4, 4)] {
        updates = updates.with(agent, UpdateRule::Periodic { period: 12, phase });
    }
    let timing = AsyncTiming {
        delays: DelaySchedule::new(11, DelayRule::Constant { delay: 0 }),
        updates,
        ..AsyncTiming::default()
    };
    (setup, timing)
}

pub fn example() -> Digraph {
    example_graph()
}

/// Random digraph with edge probability `p` and random weights whose
/// incoming sums stay below one.
pub fn random_digraph(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Digraph {
    let gamma = 0.5 / n as f64;
    let mut g = Digraph::with_gamma(n, gamma).unwrap();
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.gen_bool(p) {
                g.add_edge(j, i, rng.gen_range(gamma..=1.0 / n as f64)).unwrap();
            }
        }
    }
    g
}

/// Adds random missing edges until the graph is `(r, s)`-robust.
pub fn make_robust(rng: &mut ChaCha8Rng, mut g: Digraph, r: usize, s: usize) -> Digraph {
    let n = g.node_count();
    let checker = RobustnessChecker::default();
    while !checker.check(&g, r, s).unwrap().holds {
        let missing: Vec<(usize, usize)> = (0..n)
            .flat_map(|j| (0..n).map(move |i| (j, i)))
            .filter(|&(j, i)| j != i && !g.has_edge(j, i))
            .collect();
        assert!(!missing.is_empty(), "complete graph on {n} nodes is not ({r},{s})-robust");
        let (j, i) = missing[rng.gen_range(0..missing.len())];
        g.add_edge(j, i, g.gamma()).unwrap();
    }
    g
}

/// Sampling period and gain satisfying `1 + T^2/2 <= alpha T <= 2 - T^2/2`.
pub fn random_params(rng: &mut ChaCha8Rng, n: usize, f: usize) -> SimParams {
    let t: f64 = rng.gen_range(0.05..=0.95);
    let lo = (1.0 + t * t / 2.0) / t;
    let hi = (2.0 - t * t / 2.0) / t;
    SimParams::new(t, rng.gen_range(lo..=hi), n, f)
}

pub fn random_strategy(rng: &mut ChaCha8Rng) -> BuiltinStrategy {
    let a: f64 = rng.gen_range(-20.0..20.0);
    let b: f64 = a + rng.gen_range(0.5..30.0);
    match rng.gen_range(0..4) {
        0 => BuiltinStrategy::Hold {
            position: Some(a),
        },
        1 => strategy_oscillate(a, b),
        2 => BuiltinStrategy::Noise {
            scale: rng.gen_range(0.1..20.0),
            seed: rng.gen(),
        },
        _ => BuiltinStrategy::RandomTarget {
            low: a,
            high: b,
            seed: rng.gen(),
        },
    }
}

pub struct RandomCase {
    pub setup: Setup,
    /// `None` for synchronous cases.
    pub timing: Option<AsyncTiming>,
}

impl RandomCase {
    pub fn run(&self) -> Result<Trace> {
        match &self.timing {
            None => run_sync(&self.setup),
            Some(t) => run_async(&self.setup, t),
        }
    }

    pub fn tau(&self) -> usize {
        self.timing.as_ref().map_or(0, AsyncTiming::tau)
    }
}

/// A random DP-MSR experiment on a robust graph with up to `f` attackers.
///
/// Synchronous graphs are `(f+1, f+1)`-robust, asynchronous ones
/// `(2f+1)`-robust. Asynchronous schedules update every `P` steps and use
/// delays up to `D`, with `tau = D + P - 1` so no sample ever outlives `tau`.
pub fn random_case(seed: u64, asynchronous: bool, horizon: usize) -> RandomCase {
    let mut rng = rng(seed);
    let f = rng.gen_range(0..=1);
    let n = if f == 1 && asynchronous {
        rng.gen_range(5..=7)
    } else {
        rng.gen_range(3..=7)
    };
    let p = rng.gen_range(0.3..0.9);
    let g = random_digraph(&mut rng, n, p);
    let graph = if asynchronous {
        make_robust(&mut rng, g, 2 * f + 1, 1)
    } else {
        make_robust(&mut rng, g, f + 1, f + 1)
    };
    let params = random_params(&mut rng, n, f);
    let positions: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
    let velocities: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
    let mut adversary = Adversary::none(f);
    let attackers = rng.gen_range(0..=f);
    while adversary.malicious().len() < attackers {
        let m = rng.gen_range(0..n);
        if !adversary.is_malicious(m) {
            adversary = adversary.with(m, random_strategy(&mut rng));
        }
    }
    let setup = Setup {
        graph,
        params,
        initial: NetworkState::new(positions, velocities).unwrap(),
        adversary,
        horizon,
    };
    let timing = asynchronous.then(|| {
        let mut updates = UpdateSchedule::new(UpdateRule::Always);
        let mut max_period = 1;
        for i in 0..n {
            let period = rng.gen_range(1..=3);
            max_period = max_period.max(period);
            updates = updates.with(
                i,
                UpdateRule::Periodic {
                    period,
                    phase: rng.gen_range(0..period),
                },
            );
        }
        let max_delay = rng.gen_range(0..=3);
        let tau = max_delay + max_period - 1;
        AsyncTiming {
            delays: DelaySchedule::new(
                tau,
                DelayRule::Random {
                    max: max_delay,
                    seed: rng.gen(),
                },
            ),
            updates,
            ..AsyncTiming::default()
        }
    });
    RandomCase { setup, timing }
}

/// Independent (r,s)-robustness oracle: enumerates disjoint pairs of
/// nonempty subsets straight from the definition.
pub fn robust_oracle(g: &Digraph, r: usize, s: usize) -> bool {
    let n = g.node_count();
    let in_outside = |set: u32, i: usize| g.in_neighbors(i).filter(|(j, _)| set & (1 << j) == 0).count();
    let reach = |set: u32| (0..n).filter(|&i| set & (1 << i) != 0 && in_outside(set, i) >= r).count();
    for s1 in 1u32..(1 << n) {
        let rest = ((1u32 << n) - 1) & !s1;
        let mut s2 = rest;
        while s2 != 0 {
            let (x1, x2) = (reach(s1), reach(s2));
            let full1 = x1 == s1.count_ones() as usize;
            let full2 = x2 == s2.count_ones() as usize;
            if !full1 && !full2 && x1 + x2 < s {
                return false;
            }
            s2 = (s2 - 1) & rest;
        }
    }
    true
}

/// Monotonicity properties of robustness for one graph; returns the first one that fails.
pub fn robustness_property_violation(g: &Digraph) -> Option<String> {
    use resilient_consensus::graph::{has_directed_spanning_tree, is_rs_robust};
    let n = g.node_count();
    let holds = |r: usize, s: usize| is_rs_robust(g, r, s).unwrap().holds;
    let table: Vec<Vec<bool>> = (0..=n).map(|r| (0..=n).map(|s| r >= 1 && s >= 1 && holds(r, s)).collect()).collect();
    for r in 1..=n {
        for s in 1..=n {
            if table[r][s] {
                if r > 1 && !table[r - 1][s] {
                    return Some(format!("({r},{s}) but not ({},{s})", r - 1));
                }
                if s > 1 && !table[r][s - 1] {
                    return Some(format!("({r},{s}) but not ({r},{})", s - 1));
                }
                if r > 1 && s < n && !table[r - 1][s + 1] {
                    return Some(format!("({r},{s}) but not ({},{})", r - 1, s + 1));
                }
            }
            if r + s - 1 <= n && table[r + s - 1][1] && !table[r][s] {
                return Some(format!("{}-robust but not ({r},{s})", r + s - 1));
            }
        }
    }
    if table[1][1] && !has_directed_spanning_tree(g) {
        return Some("1-robust without a spanning tree".into());
    }
    None
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-10 * (1.0 + a.abs().max(b.abs()))
}

/// Checks the two-step matrices on one random instance: sign and row sums of
/// the normal rows of `[Phi1 Phi2]` and `[Lambda1 Lambda2]`, and both
/// position identities against the simulators.
pub fn check_matrix_instance(seed: u64) -> std::result::Result<(), String> {
    use nalgebra::DMatrix;
    use resilient_consensus::asyncsim::lambda_matrices;
    use resilient_consensus::dynamics::phi_matrices;
    use resilient_consensus::msr::effective_graph;

    let mut rng = rng(seed);
    let n = rng.gen_range(3..=7);
    let f = rng.gen_range(0..=2);
    let p = rng.gen_range(0.2..1.0);
    let graph = random_digraph(&mut rng, n, p);
    let params = random_params(&mut rng, n, f);
    let mut adversary = Adversary::none(f);
    let attackers = rng.gen_range(0..=f);
    while adversary.malicious().len() < attackers {
        let m = rng.gen_range(0..n);
        if !adversary.is_malicious(m) {
            adversary = adversary.with(m, random_strategy(&mut rng));
        }
    }
    let malicious = adversary.malicious().clone();
    let setup = Setup {
        graph: graph.clone(),
        params,
        initial: NetworkState::new(
            (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect(),
            (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect(),
        )
        .unwrap(),
        adversary,
        horizon: 20,
    };
    let normal_rows = |m: &DMatrix<f64>, other: &DMatrix<f64>, what: &str| -> std::result::Result<(), String> {
        for i in (0..n).filter(|i| !malicious.contains(i)) {
            let min = m.row(i).min().min(other.row(i).min());
            let sum = m.row(i).sum() + other.row(i).sum();
            if min < -1e-12 || (sum - 1.0).abs() > 1e-10 {
                return Err(format!("seed {seed}: {what} row {i}: min {min}, sum {sum}"));
            }
        }
        Ok(())
    };

    let trace = run_sync(&setup).map_err(|e| e.to_string())?;
    let recs = trace.records();
    let half_t2 = params.period * params.period / 2.0;
    let u_m = |k: usize| -> Vec<f64> {
        let u = recs[k].control.as_ref().unwrap();
        (0..n).map(|i| if malicious.contains(&i) { u[i] } else { 0.0 }).collect()
    };
    for k in 1..setup.horizon {
        let gk = effective_graph(&graph, &recs[k].decisions).unwrap();
        let gp = effective_graph(&graph, &recs[k - 1].decisions).unwrap();
        let (phi1, phi2) = phi_matrices(&gk, &gp, &params, &malicious).unwrap();
        normal_rows(&phi1, &phi2, "Phi")?;
        let x = DMatrix::from_column_slice(n, 1, &recs[k].positions);
        let xp = DMatrix::from_column_slice(n, 1, &recs[k - 1].positions);
        let predicted = &phi1 * x + &phi2 * xp;
        let (um, ump) = (u_m(k), u_m(k - 1));
        for i in 0..n {
            let value = predicted[i] + half_t2 * (um[i] + ump[i]);
            if !close(value, recs[k + 1].positions[i]) {
                return Err(format!("seed {seed}: Phi identity at k={k} i={i}: {value} vs {}", recs[k + 1].positions[i]));
            }
        }
    }

    // Delayed version on the same instance.
    let mut updates = UpdateSchedule::new(UpdateRule::Always);
    let mut max_period = 1;
    for i in 0..n {
        let period = rng.gen_range(1..=3);
        max_period = max_period.max(period);
        updates = updates.with(i, UpdateRule::Periodic { period, phase: rng.gen_range(0..period) });
    }
    let max_delay = rng.gen_range(0..=3);
    let tau = max_delay + max_period - 1;
    let timing = AsyncTiming {
        delays: DelaySchedule::new(tau, DelayRule::Random { max: max_delay, seed: rng.gen() }),
        updates,
        ..AsyncTiming::default()
    };
    let trace = run_async(&setup, &timing).map_err(|e| e.to_string())?;
    let recs = trace.records();
    let z = |k: usize| -> DMatrix<f64> {
        DMatrix::from_iterator(n * (tau + 1), 1, (0..=tau).flat_map(|d| recs[k.saturating_sub(d)].positions.clone()))
    };
    for k in 1..setup.horizon {
        let gk = effective_graph(&graph, &recs[k].decisions).unwrap();
        let gp = effective_graph(&graph, &recs[k - 1].decisions).unwrap();
        let (l1, l2) =
            lambda_matrices(&gk, &recs[k].sample_ages, &gp, &recs[k - 1].sample_ages, tau, &params, &malicious)
                .unwrap();
        normal_rows(&l1, &l2, "Lambda")?;
        let predicted = &l1 * z(k) + &l2 * z(k - 1);
        for i in (0..n).filter(|i| !malicious.contains(i)) {
            if !close(predicted[i], recs[k + 1].positions[i]) {
                return Err(format!(
                    "seed {seed}: Lambda identity at k={k} i={i}: {} vs {}",
                    predicted[i],
                    recs[k + 1].positions[i]
                ));
            }
        }
    }
    Ok(())
}

/// Envelope monotonicity and safety on one random DP-MSR run.
pub fn check_envelope_case(seed: u64, asynchronous: bool, horizon: usize) -> std::result::Result<(), String> {
    use resilient_consensus::asyncsim::{freshness_warnings, HistoryBuffer};
    use resilient_consensus::metrics::{
        check_safety, envelope_violation, envelopes, safety_interval_async, safety_interval_sync,
    };

    let case = random_case(seed, asynchronous, horizon);
    let setup = &case.setup;
    let normal = setup.normal_agents();
    if let Some(t) = &case.timing {
        let warnings = freshness_warnings(t, &setup.graph, &normal, horizon).unwrap();
        if !warnings.is_empty() {
            return Err(format!("seed {seed}: generator produced stale samples: {}", warnings[0]));
        }
    }
    let trace = case.run().map_err(|e| format!("seed {seed}: {e}"))?;
    let tau = case.tau();
    let env = envelopes(&trace, &normal, tau + 2);
    if let Some(k) = envelope_violation(&env, 1e-9) {
        return Err(format!("seed {seed}: envelope not monotone at k={k}: {:?} -> {:?}", env[k - 1], env[k]));
    }
    let interval = if asynchronous {
        let z0 = HistoryBuffer::new(&setup.initial.positions, tau, None);
        safety_interval_async(&z0, &setup.initial.velocities, &setup.params, &normal).unwrap()
    } else {
        safety_interval_sync(&setup.initial, &setup.params, &normal).unwrap()
    };
    let safety = check_safety(&trace, &interval, &normal);
    match safety.first_violation {
        None => Ok(()),
        Some(v) => Err(format!("seed {seed}: agent {} left {interval:?} at k={}: {}", v.agent + 1, v.step, v.position)),
    }
}

/// CSV bytes of a trace and its sidecar.
pub fn csv_bytes(trace: &Trace) -> (Vec<u8>, Vec<u8>) {
    let (mut main, mut side) = (Vec::new(), Vec::new());
    trace.write_csv(&mut main).unwrap();
    trace.write_sidecar(&mut side).unwrap();
    (main, side)
}

/// The asynchronous engine with `tau = 0` and every agent updating every
/// step must reproduce the synchronous trace byte for byte.
pub fn check_equivalence_case(seed: u64, horizon: usize) -> std::result::Result<(), String> {
    let case = random_case(seed, false, horizon);
    let sync = run_sync(&case.setup).map_err(|e| format!("seed {seed}: {e}"))?;
    let asy = run_async(&case.setup, &AsyncTiming::synchronous()).map_err(|e| format!("seed {seed}: {e}"))?;
    let (a, b) = (csv_bytes(&sync), csv_bytes(&asy));
    if a.0 != b.0 {
        return Err(format!("seed {seed}: trace CSVs differ"));
    }
    if a.1 != b.1 {
        return Err(format!("seed {seed}: filter logs differ"));
    }
    Ok(())
}
