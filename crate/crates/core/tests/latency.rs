use gpact_core::attestation::AttestationMode;
use gpact_core::engine::{EngineKind, Outcome};
use gpact_core::scenarios::{run_scenario, table4, ScenarioConfig, ScenarioKind, TABLE4_EXPECTED};

fn periods(kind: ScenarioKind, engine: EngineKind, mode: AttestationMode) -> u64 {
    let r = run_scenario(&ScenarioConfig::new(kind, mode, engine)).unwrap();
    assert_eq!(r.outcome, Outcome::Commit);
    r.periods_elapsed
}

#[test]
fn read_latencies() {
    use AttestationMode::*;
    use EngineKind::*;
    assert_eq!(periods(ScenarioKind::Read, Serial, Direct), 3);
    assert_eq!(periods(ScenarioKind::Read, Serial, Header), 5);
    assert_eq!(periods(ScenarioKind::Read, Parallel, Direct), 3);
    assert_eq!(periods(ScenarioKind::Read, Parallel, Header), 5);
}

#[test]
fn write_latencies() {
    use AttestationMode::*;
    use EngineKind::*;
    assert_eq!(periods(ScenarioKind::Write, Serial, Direct), 4);
    assert_eq!(periods(ScenarioKind::Write, Serial, Header), 7);
    assert_eq!(periods(ScenarioKind::Write, Parallel, Direct), 4);
    assert_eq!(periods(ScenarioKind::Write, Parallel, Header), 7);
}

#[test]
fn trade_latencies() {
    use AttestationMode::*;
    use EngineKind::*;
    assert_eq!(periods(ScenarioKind::Trade, Serial, Direct), 7);
    assert_eq!(periods(ScenarioKind::Trade, Serial, Header), 13);
    assert_eq!(periods(ScenarioKind::Trade, Parallel, Direct), 5);
    assert_eq!(periods(ScenarioKind::Trade, Parallel, Header), 9);
}

#[test]
fn table_is_seed_independent() {
    for seed in [1, 2, 99] {
        assert!(table4(seed).unwrap().iter().all(|c| c.pass()));
    }
    assert_eq!(TABLE4_EXPECTED.len(), 3);
}

#[test]
fn header_read_timeline() {
    let cfg = ScenarioConfig::new(
        ScenarioKind::Read,
        AttestationMode::Header,
        EngineKind::Serial,
    );
    let r = run_scenario(&cfg).unwrap();
    let labels: Vec<(u64, &str)> = r
        .trace
        .iter()
        .map(|t| (t.period, t.label.split(' ').next().unwrap()))
        .collect();
    assert_eq!(
        labels,
        [
            (1, "start"),
            (2, "relay"),
            (3, "segment"),
            (4, "relay"),
            (5, "root")
        ]
    );
}

#[test]
fn parallel_trade_runs_leaf_segments_together() {
    let cfg = ScenarioConfig::new(
        ScenarioKind::Trade,
        AttestationMode::Direct,
        EngineKind::Parallel,
    );
    let r = run_scenario(&cfg).unwrap();
    let at2: Vec<&str> = r
        .trace
        .iter()
        .filter(|t| t.period == 2)
        .map(|t| t.label.as_str())
        .collect();
    assert_eq!(at2, ["segment 1.1", "segment 1.2", "segment 1.3"]);
}
