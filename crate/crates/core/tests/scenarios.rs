mod common;

use std::path::Path;

use resilient_consensus::asyncsim::build_proposition1_scenario;
use resilient_consensus::cli::{presets, Report, Scenario};
use resilient_consensus::Trace;

fn run_preset(name: &str) -> (Report, Trace) {
    let exp = presets::load(name).unwrap().build(Path::new(".")).unwrap();
    let trace = exp.run().unwrap();
    (Report::compute(&exp, &trace).unwrap(), trace)
}

#[test]
fn fig5_reaches_consensus_inside_the_interval() {
    let (r, _) = run_preset("fig5-sync-dpmsr");
    assert!(r.consensus.achieved && r.safety.holds);
    assert!((r.interval.lo - 0.19).abs() < 0.005 && (r.interval.hi - 8.54).abs() < 0.005);
    assert!(r.envelopes_monotone);
    assert!(r.rate.converging);
}

#[test]
fn fig4_follows_the_attacker() {
    let (r, _) = run_preset("fig4-sync-conventional");
    assert!(r.consensus.achieved);
    assert!(!r.safety.holds);
    assert!((r.consensus.value.unwrap() - 10.0).abs() < 1e-6);
}

#[test]
fn fig6_sync_and_async_failures() {
    let (r, _) = run_preset("fig6-sync-nonrobust");
    assert!(!r.consensus.achieved);
    let (r, _) = run_preset("fig6-async-robust-fail");
    assert!(!r.consensus.achieved);
    assert_eq!(r.clusters.len(), 2);
    assert!(r.safety.holds);
    let (r, _) = run_preset("fig7-async-complete");
    assert!(r.consensus.achieved);
}

#[test]
fn proposition_preset_matches_the_builder() {
    let (_, from_file) = run_preset("proposition1");
    let built = build_proposition1_scenario(1, 1.0, 9.0, 5.0).unwrap().run().unwrap();
    assert_eq!(common::csv_bytes(&from_file), common::csv_bytes(&built));
}

#[test]
fn reports_survive_a_trace_round_trip() {
    for name in ["fig5-sync-dpmsr", "fig6-async-robust-fail", "proposition1"] {
        let exp = presets::load(name).unwrap().build(Path::new(".")).unwrap();
        let trace = exp.run().unwrap();
        let report = Report::compute(&exp, &trace).unwrap();
        let (main, side) = common::csv_bytes(&trace);
        let mut back = Trace::read_csv(main.as_slice()).unwrap();
        assert_eq!(Report::compute(&exp, &back).unwrap(), report, "{name}");
        back.attach_sidecar(side.as_slice()).unwrap();
        assert_eq!(back, trace, "{name}");
    }
}

#[test]
fn scenario_files_round_trip_through_toml() {
    for p in presets::PRESETS {
        let s = Scenario::from_toml(p.source).unwrap();
        assert_eq!(Scenario::from_toml(&s.to_toml().unwrap()).unwrap(), s, "{}", p.name);
    }
}

#[test]
fn graph_files_resolve_relative_to_the_scenario() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("g.edges"), resilient_consensus::graph::EXAMPLE_GRAPH).unwrap();
    let text = presets::find("fig5-sync-dpmsr")
        .unwrap()
        .source
        .replace("generator = \"example\"", "file = \"g.edges\"");
    let path = dir.path().join("s.toml");
    std::fs::write(&path, text).unwrap();
    let (s, base) = Scenario::load(&path).unwrap();
    let exp = s.build(&base).unwrap();
    assert_eq!(exp.setup.graph, resilient_consensus::graph::example_graph());
}
