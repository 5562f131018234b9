//! A user-defined attacker: it always moves halfway towards the largest
//! position in the network plus an offset, trying to drag agents upwards.

use resilient_consensus::graph::build_complete;
use resilient_consensus::metrics::{check_consensus, check_safety, safety_interval_sync};
use resilient_consensus::{run_sync, Adversary, NetworkState, Result, Setup, SimParams, Strategy, StrategyContext, WeightPolicy};

#[derive(Debug)]
struct Dragger {
    offset: f64,
}

impl Strategy for Dragger {
    fn control(&self, ctx: &StrategyContext<'_>) -> Result<f64> {
        let top = ctx.state.positions.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let target = ctx.position() + 0.5 * (top + self.offset - ctx.position());
        Ok(ctx.control_to_reach(target))
    }
}

fn main() -> Result<()> {
    let setup = Setup {
        graph: build_complete(6, WeightPolicy::InverseOrder)?,
        params: SimParams::new(0.3, 3.67, 6, 1),
        initial: NetworkState::new(vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0], vec![0.0; 6])?,
        adversary: Adversary::none(1).with(5, Dragger { offset: 2.0 }),
        horizon: 1500,
    };
    let normal = setup.normal_agents();
    let trace = run_sync(&setup)?;
    let interval = safety_interval_sync(&setup.initial, &setup.params, &normal)?;
    let consensus = check_consensus(&trace, &normal, 1e-6, 50)?;
    println!("attacker ends at {:.1}", trace.last().positions[5]);
    println!(
        "normal agents: consensus {} at {:?}, inside [{:.2}, {:.2}]: {}",
        consensus.achieved,
        consensus.value,
        interval.lo,
        interval.hi,
        check_safety(&trace, &interval, &normal).holds
    );
    Ok(())
}
