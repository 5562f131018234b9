//! The delayed two-cluster attack on the four-block graph.

use resilient_consensus::asyncsim::build_proposition1_scenario;
use resilient_consensus::graph::proposition_groups;
use resilient_consensus::Result;

fn main() -> Result<()> {
    let f = 1;
    let scenario = build_proposition1_scenario(f, 1.0, 9.0, 5.0)?;
    let trace = scenario.run()?;
    let [g1, g2, g3, g4] = proposition_groups(f);
    println!("k      G1      G2      G3      G4");
    for k in [0, 1, 2, 3, 10, 100, 1000] {
        let x = &trace.records()[k].positions;
        println!("{k:<5} {:>7.4} {:>7.4} {:>7.4} {:>7.4}", x[g1.start], x[g2.start], x[g3.start], x[g4.start]);
    }
    Ok(())
}
