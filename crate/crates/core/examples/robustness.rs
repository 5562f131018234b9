//! Checks (r,s)-robustness of a few graphs and prints violating pairs.

use resilient_consensus::graph::{
    build_complete, build_proposition_graph, example_graph, is_rs_robust, RobustnessChecker,
};
use resilient_consensus::{Digraph, Result, WeightPolicy};

fn show(name: &str, g: &Digraph, r: usize, s: usize) -> Result<()> {
    let report = is_rs_robust(g, r, s)?;
    match report.witness {
        None => println!("{name}: ({r},{s})-robust"),
        Some((s1, s2)) => {
            let one = |s: &std::collections::BTreeSet<usize>| s.iter().map(|v| v + 1).collect::<Vec<_>>();
            println!("{name}: not ({r},{s})-robust, witness {:?} / {:?}", one(&s1), one(&s2));
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    let k5 = build_complete(5, WeightPolicy::InverseOrder)?;
    show("K5", &k5, 3, 5)?;

    let example = example_graph();
    show("example", &example, 2, 2)?;
    show("example", &example, 3, 1)?;

    let mut damaged = example.clone();
    damaged.remove_edge(1, 4);
    show("example without 2->5", &damaged, 2, 2)?;

    let prop = build_proposition_graph(1)?;
    show("counterexample graph", &prop, 2, 1)?;
    show("counterexample graph", &prop, 2, 2)?;

    // Largest r for every s.
    let checker = RobustnessChecker::default();
    for s in 1..=example.node_count() {
        let best = (1..=3).take_while(|&r| checker.check(&example, r, s).map(|x| x.holds).unwrap_or(false)).last();
        println!("example: s = {s}, max r = {}", best.unwrap_or(0));
    }
    Ok(())
}
