use std::fmt;

use serde::Serialize;

use crate::attestation::AttestationMode;
use crate::chain_sim::{Simulation, TxKind, TxStatus};
use crate::crypto::Address;
use crate::ids::{ChainId, XtxRef};
use crate::protocol::ProtocolEvent;
use crate::storage::Decision;

use super::actors::Submission;
use super::plan::EngineKind;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct TxCounts {
    pub start: u32,
    pub segment: u32,
    pub root: u32,
    pub signalling: u32,
    pub relay: u32,
}

impl TxCounts {
    pub fn add(&mut self, kind: TxKind) {
        match kind {
            TxKind::Start => self.start += 1,
            TxKind::Segment => self.segment += 1,
            TxKind::Root => self.root += 1,
            TxKind::Signalling => self.signalling += 1,
            TxKind::Relay => self.relay += 1,
            TxKind::Invoke => {}
        }
    }
}

impl fmt::Display for TxCounts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "start={};segment={};root={};signalling={};relay={}",
            self.start, self.segment, self.root, self.signalling, self.relay
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Commit,
    Abort,
    /// The start transaction never landed; nothing happened anywhere.
    NotStarted,
    /// Started but no root decision was reached.
    Unresolved,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Commit => "commit",
            Outcome::Abort => "abort",
            Outcome::NotStarted => "not_started",
            Outcome::Unresolved => "unresolved",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TraceEntry {
    pub period: u64,
    pub chain: ChainId,
    pub actor: String,
    pub kind: TxKind,
    pub label: String,
    /// `None` on success, otherwise the rejection reason.
    pub failure: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub mode: AttestationMode,
    pub engine: EngineKind,
    pub periods_elapsed: u64,
    pub tx_counts: TxCounts,
    pub outcome: Outcome,
    pub lock_residue: Vec<(ChainId, Address)>,
    pub terminated: bool,
    pub trace: Vec<TraceEntry>,
}

impl RunReport {
    pub fn build(
        sim: &Simulation,
        scenario: &str,
        engine: EngineKind,
        xtx: XtxRef,
        logs: &[&[Submission]],
        terminated: bool,
    ) -> Self {
        let mut subs: Vec<&Submission> = logs.iter().flat_map(|l| l.iter()).collect();
        subs.sort_by_key(|s| (s.period, s.handle.chain, s.handle.index));
        let mut tx_counts = TxCounts::default();
        let mut trace = Vec::new();
        for s in &subs {
            tx_counts.add(s.kind);
            let failure = match sim.receipt(s.handle).map(|r| &r.status) {
                Some(TxStatus::Success) => None,
                Some(TxStatus::Failure(reason)) => Some(reason.clone()),
                None => Some("not yet included".into()),
            };
            trace.push(TraceEntry {
                period: s.period,
                chain: s.handle.chain,
                actor: s.actor.clone(),
                kind: s.kind,
                label: s.label.clone(),
                failure,
            });
        }
        let first = subs
            .iter()
            .find(|s| s.kind == TxKind::Start)
            .map(|s| s.period);
        let last = subs.iter().map(|s| s.period).max();
        let periods_elapsed = match (first, last) {
            (Some(f), Some(l)) => l - f + 1,
            _ => 0,
        };
        Self {
            scenario: scenario.to_string(),
            mode: sim.mode(),
            engine,
            periods_elapsed,
            tx_counts,
            outcome: outcome_of(sim, xtx),
            lock_residue: sim.lock_residue(),
            terminated,
            trace,
        }
    }

    /// `scenario,mode,engine,periods,outcome,txCounts`
    pub fn machine_line(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.scenario,
            self.mode,
            self.engine,
            self.periods_elapsed,
            self.outcome,
            self.tx_counts
        )
    }
}

pub fn outcome_of(sim: &Simulation, xtx: XtxRef) -> Outcome {
    let events = sim.protocol_events(xtx.root_chain);
    let mine = || events.iter().map(|(_, e)| e).filter(|e| e.xtx() == xtx);
    match mine().find_map(|e| e.as_root()) {
        Some(r) if r.decision == Decision::Commit => Outcome::Commit,
        Some(_) => Outcome::Abort,
        None if mine().any(|e| matches!(e, ProtocolEvent::Start(_))) => Outcome::Unresolved,
        None => Outcome::NotStarted,
    }
}

impl fmt::Display for RunReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "scenario {} | mode {} | engine {}",
            self.scenario, self.mode, self.engine
        )?;
        writeln!(f, "outcome: {}", self.outcome)?;
        writeln!(f, "periods elapsed: {}", self.periods_elapsed)?;
        writeln!(f, "transactions: {}", self.tx_counts)?;
        writeln!(f, "terminated: {}", self.terminated)?;
        if self.lock_residue.is_empty() {
            writeln!(f, "lock residue: none")?;
        } else {
            for (chain, addr) in &self.lock_residue {
                writeln!(f, "lock residue: {addr} on {chain}")?;
            }
        }
        writeln!(f, "trace:")?;
        for t in &self.trace {
            write!(
                f,
                "  period {:>3}  {:<8} {:<12} {}",
                t.period,
                t.chain.to_string(),
                t.actor,
                t.label
            )?;
            match &t.failure {
                None => writeln!(f)?,
                Some(reason) => writeln!(f, "  [rejected: {reason}]")?,
            }
        }
        Ok(())
    }
}
