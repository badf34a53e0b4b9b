//! Off-chain execution: call-tree simulation, planning, the coordinator that
//! drives a transaction through its steps, and the recovery agent.

mod actors;
mod plan;
mod report;
mod simulate;

pub use actors::{ActorStatus, Coordinator, CrashPoint, Submission, TimeoutAgent};
pub use plan::{EngineKind, EnginePlan, PlanError, Step};
pub use report::{outcome_of, Outcome, RunReport, TraceEntry, TxCounts};
pub use simulate::{simulate_tree, SimulateError};

use crate::chain_sim::Simulation;

/// One coordinator and the agent standing by for it.
pub struct Actors {
    pub coordinator: Coordinator,
    pub agent: Option<TimeoutAgent>,
}

impl Actors {
    fn idle(&self) -> bool {
        self.coordinator.idle()
            && self
                .agent
                .as_ref()
                .is_none_or(|a| a.idle(&self.coordinator))
    }
}

/// Runs actors in lockstep with the simulation until all are idle or
/// `max_period` is reached. Returns whether everything went idle.
pub fn drive(sim: &mut Simulation, actors: &mut [Actors], max_period: u64) -> bool {
    loop {
        for a in actors.iter_mut() {
            a.coordinator.tick(sim);
            if let Some(agent) = a.agent.as_mut() {
                agent.tick(sim, &a.coordinator);
            }
        }
        if actors.iter().all(Actors::idle) {
            return true;
        }
        if sim.period() >= max_period {
            return false;
        }
        sim.advance_period();
    }
}
