//! Prints the two-step update matrices for one filtered step and checks the
//! position identity against the simulator.

use nalgebra::DMatrix;
use resilient_consensus::adversary::strategy_hold;
use resilient_consensus::dynamics::phi_matrices;
use resilient_consensus::graph::example_graph;
use resilient_consensus::msr::effective_graph;
use resilient_consensus::{run_sync, Adversary, NetworkState, Result, Setup, SimParams};

fn main() -> Result<()> {
    let setup = Setup {
        graph: example_graph(),
        params: SimParams::new(0.3, 3.67, 5, 1),
        initial: NetworkState::new(vec![10.0, 4.0, 2.5, 1.0, 8.0], vec![0.0, -6.0, -5.0, 1.0, 4.0])?,
        adversary: Adversary::none(1).with(0, strategy_hold(10.0)),
        horizon: 5,
    };
    let trace = run_sync(&setup)?;
    let recs = trace.records();
    let k = 2;
    let gk = effective_graph(&setup.graph, &recs[k].decisions)?;
    let gp = effective_graph(&setup.graph, &recs[k - 1].decisions)?;
    let (phi1, phi2) = phi_matrices(&gk, &gp, &setup.params, setup.adversary.malicious())?;
    println!("Phi1 ={phi1:.4}Phi2 ={phi2:.4}");
    let x = DMatrix::from_column_slice(5, 1, &recs[k].positions);
    let xp = DMatrix::from_column_slice(5, 1, &recs[k - 1].positions);
    let predicted = &phi1 * x + &phi2 * xp;
    for i in 1..5 {
        println!(
            "agent {}: predicted {:.12}, simulated {:.12}, row sum {:.3}",
            i + 1,
            predicted[i],
            recs[k + 1].positions[i],
            phi1.row(i).sum() + phi2.row(i).sum()
        );
    }
    Ok(())
}
