//! Partially asynchronous updates with delays up to 11 steps and an
//! oscillating attacker, on the example graph and on K5.

use resilient_consensus::adversary::strategy_oscillate;
use resilient_consensus::graph::{build_complete, example_graph};
use resilient_consensus::metrics::{check_consensus, position_clusters};
use resilient_consensus::{
    run_async, Adversary, AsyncTiming, DelayRule, DelaySchedule, Digraph, NetworkState, Result, Setup, SimParams,
    UpdateRule, UpdateSchedule, WeightPolicy,
};

fn run(name: &str, graph: Digraph) -> Result<()> {
    let setup = Setup {
        graph,
        params: SimParams::new(0.3, 3.67, 5, 1),
        initial: NetworkState::new(vec![4.0, 10.0, 8.0, 9.0, 1.0], vec![0.0, -1.0, -1.0, 4.0, 3.0])?,
        adversary: Adversary::none(1).with(3, strategy_oscillate(2.0, 9.0)),
        horizon: 5000,
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
    let trace = run_async(&setup, &timing)?;
    let normal = setup.normal_agents();
    let consensus = check_consensus(&trace, &normal, 1e-6, 50)?;
    println!("{name}: consensus {}", consensus.achieved);
    for c in position_clusters(&trace.last().positions, &normal, 1.0) {
        let members: Vec<usize> = c.members.iter().map(|i| i + 1).collect();
        println!("  agents {members:?} at {:.4}", c.center);
    }
    Ok(())
}

fn main() -> Result<()> {
    run("example graph", example_graph())?;
    run("K5", build_complete(5, WeightPolicy::InverseOrder)?)
}
