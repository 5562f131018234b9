//! Conventional consensus against DP-MSR with one attacker holding at 10.

use resilient_consensus::adversary::strategy_hold;
use resilient_consensus::graph::example_graph;
use resilient_consensus::metrics::{check_consensus, check_safety, rate_estimate, safety_interval_sync};
use resilient_consensus::{run_sync, Adversary, NetworkState, Result, Setup, SimParams};

fn main() -> Result<()> {
    for f in [0, 1] {
        let setup = Setup {
            graph: example_graph(),
            params: SimParams::new(0.3, 3.67, 5, f),
            initial: NetworkState::new(vec![10.0, 4.0, 2.5, 1.0, 8.0], vec![0.0, -6.0, -5.0, 1.0, 4.0])?,
            adversary: Adversary::none(1).with(0, strategy_hold(10.0)),
            horizon: 2000,
        };
        let normal = setup.normal_agents();
        let trace = run_sync(&setup)?;
        let interval = safety_interval_sync(&setup.initial, &setup.params, &normal)?;
        let consensus = check_consensus(&trace, &normal, 1e-6, 50)?;
        let safety = check_safety(&trace, &interval, &normal);
        let rate = rate_estimate(&trace, &normal);
        println!(
            "f = {f}: interval [{:.2}, {:.2}], consensus {} at {:?}, safe {}, slope {:.4}",
            interval.lo, interval.hi, consensus.achieved, consensus.value, safety.holds, rate.slope
        );
    }
    Ok(())
}
