//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Built with `harness = false`; the process exits nonzero if any criterion
//! fails.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;
use resilient_consensus::adversary::strategy_hold;
use resilient_consensus::asyncsim::{build_proposition1_scenario, HistoryBuffer};
use resilient_consensus::graph::{build_complete, build_proposition_graph, is_r_robust, is_rs_robust, proposition_groups};
use resilient_consensus::metrics::{
    check_consensus, check_safety, position_clusters, rate_estimate, safety_interval_async, safety_interval_sync,
};
use resilient_consensus::*;

use common::{async_example, example, random_digraph, rng, sync_example};

type Outcome = std::result::Result<String, String>;

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

fn criterion_1() -> Outcome {
    let s = sync_example(example(), 1, 0);
    let normal = s.normal_agents();
    let sync = safety_interval_sync(&s.initial, &s.params, &normal).map_err(|e| e.to_string())?;
    let (a, _) = async_example(example(), 0);
    let an = a.normal_agents();
    let z0 = HistoryBuffer::new(&a.initial.positions, 11, None);
    let asy = safety_interval_async(&z0, &a.initial.velocities, &a.params, &an).map_err(|e| e.to_string())?;
    let all: NodeSet = (0..5).collect();
    let asy_all = safety_interval_async(&z0, &a.initial.velocities, &a.params, &all).map_err(|e| e.to_string())?;
    let detail = format!(
        "sync [{:.4}, {:.4}]; async [{:.4}, {:.4}] over normal agents, upper {:.4} over all agents",
        sync.lo, sync.hi, asy.lo, asy.hi, asy_all.hi
    );
    if within(sync.lo, 0.19, 0.005) && within(sync.hi, 8.54, 0.005) && within(asy.lo, 0.865, 0.005) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_2() -> Outcome {
    let mut s = sync_example(example(), 0, 500);
    s.params.f = 0;
    let normal = s.normal_agents();
    let trace = run_sync(&s).map_err(|e| e.to_string())?;
    let last = trace.last();
    let worst = normal.iter().map(|&i| (last.positions[i] - 10.0).abs()).fold(0.0, f64::max);
    let interval = safety_interval_sync(&s.initial, &s.params, &normal).map_err(|e| e.to_string())?;
    let safety = check_safety(&trace, &interval, &normal);
    let detail = format!("max |x_i[500] - 10| = {worst:.2e}; safety holds = {}", safety.holds);
    if worst <= 1e-3 && !safety.holds {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn dpmsr_run(setup: &Setup) -> std::result::Result<(Trace, metrics::ConsensusVerdict), String> {
    let trace = run_sync(setup).map_err(|e| e.to_string())?;
    let verdict = check_consensus(&trace, &setup.normal_agents(), 1e-6, 50).map_err(|e| e.to_string())?;
    Ok((trace, verdict))
}

fn criterion_3() -> Outcome {
    let s = sync_example(example(), 1, 2000);
    let (trace, c) = dpmsr_run(&s)?;
    let speed = s
        .normal_agents()
        .iter()
        .map(|&i| trace.last().velocities[i].abs())
        .fold(0.0, f64::max);
    let value = c.value.unwrap_or(f64::NAN);
    let detail = format!(
        "consensus {} at {value:.4} from step {:?}; final max |v| = {speed:.1e}",
        c.achieved, c.step_of_convergence
    );
    if c.achieved && (0.19..=8.54).contains(&value) && speed < 1e-6 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_4() -> Outcome {
    let mut g = example();
    g.remove_edge(1, 4);
    let robust = is_rs_robust(&g, 2, 2).map_err(|e| e.to_string())?.holds;
    let s = sync_example(g, 1, 2000);
    let (trace, c) = dpmsr_run(&s)?;
    // Agent 5 must discard both remaining samples every step, so its input
    // is pure damping.
    let isolated = trace
        .records()
        .iter()
        .filter(|r| r.control.is_some())
        .all(|r| r.decisions.iter().any(|d| d.agent == 4 && d.kept.is_empty()));
    let (t, alpha) = (s.params.period, s.params.alpha);
    let (mut x, mut v) = (s.initial.positions[4], s.initial.velocities[4]);
    let mut max_dev: f64 = 0.0;
    for r in trace.records() {
        max_dev = max_dev.max((r.positions[4] - x).abs());
        let u = -alpha * v;
        x = x + t * v + t * t / 2.0 * u;
        v += t * u;
    }
    let detail = format!(
        "(2,2)-robust = {robust}; consensus = {} (spread {:.3}); agent 5 isolated = {isolated}, \
         settles at {:.4} from 8 (damping-only deviation {max_dev:.1e})",
        c.achieved,
        c.final_spread,
        trace.last().positions[4]
    );
    if !robust && !c.achieved && isolated && max_dev <= 1e-12 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_5() -> Outcome {
    let (s, t) = async_example(example(), 5000);
    let normal = s.normal_agents();
    let trace = run_async(&s, &t).map_err(|e| e.to_string())?;
    let c = check_consensus(&trace, &normal, 1e-6, 50).map_err(|e| e.to_string())?;
    let clusters = position_clusters(&trace.last().positions, &normal, 1.0);
    let earlier = position_clusters(&trace.records()[4000].positions, &normal, 1.0);
    let members = |cs: &[metrics::Cluster]| cs.iter().map(|c| c.members.clone()).collect::<Vec<_>>();
    let persistent = members(&clusters) == members(&earlier);
    let centers: Vec<String> = clusters
        .iter()
        .map(|c| format!("{:?}@{:.3}", c.members.iter().map(|i| i + 1).collect::<Vec<_>>(), c.center))
        .collect();

    let (k5, tk5) = async_example(build_complete(5, WeightPolicy::InverseOrder).unwrap(), 5000);
    let k5_trace = run_async(&k5, &tk5).map_err(|e| e.to_string())?;
    let k5c = check_consensus(&k5_trace, &normal, 1e-6, 50).map_err(|e| e.to_string())?;
    let detail = format!(
        "example graph: consensus {}, clusters {} (persistent since k=4000: {persistent}); K5: consensus {} at {:.4}",
        c.achieved,
        centers.join(" "),
        k5c.achieved,
        k5c.value.unwrap_or(f64::NAN)
    );
    if !c.achieved && clusters.len() == 2 && persistent && k5c.achieved {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_6() -> Outcome {
    let scenario = build_proposition1_scenario(1, 1.0, 9.0, 5.0).map_err(|e| e.to_string())?;
    let trace = scenario.run().map_err(|e| e.to_string())?;
    let [_, _, g3, g4] = proposition_groups(1);
    let g3_exact = trace.records().iter().all(|r| g3.clone().all(|i| r.positions[i] == 1.0));
    let g4_exact = trace.records().iter().all(|r| g4.clone().all(|i| r.positions[i] == 9.0));
    let g4_at = |k: usize| trace.records()[k].positions[g4.start];
    let detail = format!(
        "G3 exactly at 1 for all steps: {g3_exact}; G4 exactly at 9: {g4_exact} \
         (G4 at k=1: {:.3}, k=10: {:.3}, k=100: {:.3}, k=1000: {:.3})",
        g4_at(1),
        g4_at(10),
        g4_at(100),
        g4_at(1000)
    );
    if g3_exact && g4_exact {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let k5 = build_complete(5, WeightPolicy::InverseOrder).unwrap();
    let a = is_rs_robust(&k5, 3, 5).unwrap().holds && is_r_robust(&k5, 3).unwrap().holds;
    let p = build_proposition_graph(1).unwrap();
    let p2 = is_r_robust(&p, 2).unwrap().holds;
    let p22 = is_rs_robust(&p, 2, 2).unwrap();
    let p3 = is_r_robust(&p, 3).unwrap().holds;
    let mut bad = Vec::new();
    for seed in 0..200u64 {
        let mut r = rng(7_000 + seed);
        let n = r.gen_range(2..=7);
        let prob = r.gen_range(0.1..1.0);
        let g = random_digraph(&mut r, n, prob);
        if let Some(v) = common::robustness_property_violation(&g) {
            bad.push(format!("seed {seed}: {v}"));
        }
    }
    let witness = p22
        .witness
        .as_ref()
        .map(|(s1, s2)| {
            let one = |s: &NodeSet| s.iter().map(|i| i + 1).collect::<Vec<_>>();
            format!(" (witness {:?} / {:?})", one(s1), one(s2))
        })
        .unwrap_or_default();
    let detail = format!(
        "(a) K5 (3,5)- and 3-robust: {a}; (b) proposition graph 2-robust: {p2}, (2,2)-robust: {}{witness}, \
         3-robust: {p3}; (c) robustness property suite on 200 graphs: {} failures; {:.2}s",
        p22.holds,
        bad.len(),
        start.elapsed().as_secs_f64()
    );
    if a && p2 && p22.holds && !p3 && bad.is_empty() && start.elapsed().as_secs() < 60 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn batch(count: u64, base: u64, check: impl Fn(u64) -> std::result::Result<(), String>) -> Outcome {
    let failures: Vec<String> = (base..base + count).filter_map(|s| check(s).err()).collect();
    match failures.first() {
        None => Ok(format!("{count} instances")),
        Some(first) => Err(format!("{} of {count} failed; first: {first}", failures.len())),
    }
}

fn criterion_8() -> Outcome {
    batch(500, 8_000, common::check_matrix_instance)
}

fn criterion_9() -> Outcome {
    let sync = batch(50, 9_000, |s| common::check_envelope_case(s, false, 300))?;
    let asy = batch(50, 9_500, |s| common::check_envelope_case(s, true, 300))?;
    Ok(format!("{sync} synchronous, {asy} asynchronous"))
}

fn criterion_10() -> Outcome {
    batch(50, 10_000, |s| common::check_equivalence_case(s, 200))
}

/// The criterion-3 experiment with perturbed initial states and hold targets.
fn criterion_11() -> Outcome {
    let mut converging = 0;
    let mut worst: (f64, f64) = (f64::NEG_INFINITY, f64::INFINITY);
    for seed in 0..40u64 {
        let mut r = rng(11_000 + seed);
        let mut s = sync_example(example(), 1, 2000);
        if seed > 0 {
            let x: Vec<f64> = (0..5).map(|_| r.gen_range(-10.0..10.0)).collect();
            let v: Vec<f64> = (0..5).map(|_| r.gen_range(-6.0..6.0)).collect();
            s.initial = NetworkState::new(x, v).unwrap();
            s.adversary = Adversary::none(1).with(0, strategy_hold(r.gen_range(-20.0..20.0)));
        }
        let (trace, c) = dpmsr_run(&s)?;
        if !c.achieved {
            continue;
        }
        converging += 1;
        let rate = rate_estimate(&trace, &s.normal_agents());
        worst = (worst.0.max(rate.slope), worst.1.min(rate.r_squared));
        if !(rate.slope < 0.0 && rate.r_squared > 0.9) {
            return Err(format!("seed {seed}: slope {:.3e}, r2 {:.3}", rate.slope, rate.r_squared));
        }
    }
    let detail = format!("{converging} converging runs; largest slope {:.3e}, smallest r2 {:.4}", worst.0, worst.1);
    if converging > 0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("safety intervals", criterion_1),
        ("conventional run follows the attacker", criterion_2),
        ("synchronous DP-MSR consensus", criterion_3),
        ("non-robust graph, no consensus", criterion_4),
        ("asynchronous attack splits the example graph", criterion_5),
        ("two-cluster counterexample", criterion_6),
        ("robustness checker", criterion_7),
        ("two-step matrices", criterion_8),
        ("envelope monotonicity and safety", criterion_9),
        ("tau = 0 equivalence", criterion_10),
        ("convergence rate", criterion_11),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (status, detail) = match check() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!(
            "criterion {:>2} {status} {name} [{:.2}s]: {detail}",
            i + 1,
            start.elapsed().as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
