//! Browser bindings. Every export takes plain strings and numbers and returns
//! JSON, so the page needs no generated types.

use gpact_core::scenarios::{
    execute, run_livelock, table4, verify_post_state, Fault, ScenarioConfig, ScenarioKind,
};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct TimelineView {
    report: gpact_core::engine::RunReport,
    machine_line: String,
    post_state: Result<(), String>,
    initial: gpact_core::scenarios::Snapshot,
    r#final: gpact_core::scenarios::Snapshot,
}

/// Parses a comma-separated fault list such as `"crash:after-start,byzantine:1"`.
fn parse_faults(list: &str) -> Result<Vec<Fault>, String> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect()
}

pub fn timeline(
    scenario: &str,
    mode: &str,
    engine: &str,
    faults: &str,
    timeout: u32,
) -> Result<String, String> {
    let kind: ScenarioKind = scenario.parse()?;
    let mut cfg = ScenarioConfig::new(kind, mode.parse()?, engine.parse()?);
    cfg.faults = parse_faults(faults)?;
    cfg.timeout_periods = u64::from(timeout);
    if kind == ScenarioKind::Livelock {
        return livelock_rounds(&cfg);
    }
    let run = execute(&cfg).map_err(|e| e.to_string())?;
    let view = TimelineView {
        machine_line: run.report.machine_line(),
        post_state: verify_post_state(&run),
        initial: run.initial.clone(),
        r#final: run.final_snapshot(),
        report: run.report,
    };
    serde_json::to_string(&view).map_err(|e| e.to_string())
}

fn livelock_rounds(cfg: &ScenarioConfig) -> Result<String, String> {
    let r = run_livelock(cfg).map_err(|e| e.to_string())?;
    serde_json::to_string(&r).map_err(|e| e.to_string())
}

pub fn latency_grid() -> Result<String, String> {
    let cells = table4(1).map_err(|e| e.to_string())?;
    serde_json::to_string(&cells).map_err(|e| e.to_string())
}

pub fn livelock(mode: &str, engine: &str, rounds: u32) -> Result<String, String> {
    let mut cfg = ScenarioConfig::new(ScenarioKind::Livelock, mode.parse()?, engine.parse()?);
    cfg.retries = rounds.clamp(1, 20);
    livelock_rounds(&cfg)
}

/// Scenario run as JSON: report with per-period trace, machine line,
/// post-state verdict and the tracked storage before and after.
#[wasm_bindgen(js_name = runTimeline)]
pub fn run_timeline(
    scenario: &str,
    mode: &str,
    engine: &str,
    faults: &str,
    timeout: u32,
) -> Result<String, JsError> {
    timeline(scenario, mode, engine, faults, timeout).map_err(|e| JsError::new(&e))
}

/// The twelve latency cells with expected and measured periods.
#[wasm_bindgen(js_name = latencyTable)]
pub fn latency_table() -> Result<String, JsError> {
    latency_grid().map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = runLivelock)]
pub fn run_livelock_pair(mode: &str, engine: &str, rounds: u32) -> Result<String, JsError> {
    livelock(mode, engine, rounds).map_err(|e| JsError::new(&e))
}
