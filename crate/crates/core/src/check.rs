//! Exhaustive exploration of transaction orderings for the two-chain write
//! workload.
//!
//! Each move submits at most one transaction and then produces a block on
//! every chain. The search branches over every enabled move, so it covers
//! early and late segments, competing abort roots, missing relays, replays
//! of recorded transactions and idle periods that push past the timeout.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::attestation::AttestationMode;
use crate::chain_sim::{
    control_address, EventLocation, Simulation, Transaction, TxCall, TxKind, TxStatus,
};
use crate::codec::decode_u64;
use crate::engine::{simulate_tree, EngineKind};
use crate::ids::{ChainId, TxId, XtxRef};
use crate::protocol::{
    CallExecutionTree, CallPath, ProtocolEvent, RootEvent, SegmentEvent, StartEvent,
};
use crate::scenarios::{self, Deployment, ScenarioConfig, ScenarioError, ScenarioKind};
use crate::storage::Decision;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Move {
    Start,
    Segment,
    Root,
    /// Root with no children, sent by a bystander.
    AbortRoot,
    Signal,
    /// Relay a missing event header to the given chain.
    Relay(ChainId),
    /// Resubmit the oldest recorded protocol transaction not yet replayed.
    Replay,
    Tick,
}

impl fmt::Display for Move {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Move::Relay(c) => write!(f, "relay->{c}"),
            other => write!(f, "{}", format!("{other:?}").to_lowercase()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CheckConfig {
    pub mode: AttestationMode,
    pub timeout_periods: u64,
    /// Moves per interleaving before it counts as truncated.
    pub max_moves: usize,
    /// Submissions allowed per protocol step, successful or not.
    pub max_attempts: u32,
    pub seed: u64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            mode: AttestationMode::Direct,
            timeout_periods: 3,
            max_moves: 10,
            max_attempts: 2,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct CheckReport {
    /// Move sequences that reach a decided root with every lock released.
    pub complete: u64,
    pub commits: u64,
    pub aborts: u64,
    /// Sequences cut off by the move budget or with nothing left to try.
    pub truncated: u64,
    pub states: u64,
    pub replays: u64,
    pub violations: Vec<String>,
}

impl CheckReport {
    pub fn interleavings(&self) -> u64 {
        self.complete + self.truncated
    }

    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "interleavings: {} ({} complete: {} commit, {} abort; {} truncated)",
            self.interleavings(),
            self.complete,
            self.commits,
            self.aborts,
            self.truncated
        )?;
        writeln!(f, "states explored: {}", self.states)?;
        writeln!(f, "replays rejected: {}", self.replays)?;
        if self.violations.is_empty() {
            writeln!(f, "violations: none")
        } else {
            for v in &self.violations {
                writeln!(f, "violation: {v}")?;
            }
            Ok(())
        }
    }
}

const MAX_REPORTED: usize = 20;

struct Fixed {
    cfg: CheckConfig,
    deployment: Deployment,
    tree: CallExecutionTree,
    tx_id: TxId,
    xtx: XtxRef,
    root_chain: ChainId,
    seg_chain: ChainId,
    seg_path: CallPath,
    source_value: u64,
    initial_target: u64,
}

#[derive(Clone)]
struct Node {
    sim: Simulation,
    path: Vec<Move>,
    attempts: BTreeMap<Move, u32>,
    recorded: Vec<(ChainId, Transaction)>,
    replayed: usize,
    ticks: u64,
}

#[derive(Default)]
struct Facts {
    start: Option<(EventLocation, StartEvent)>,
    starts: usize,
    segment: Option<(EventLocation, SegmentEvent)>,
    segments: usize,
    root: Option<(EventLocation, RootEvent)>,
    roots: usize,
    signalled: bool,
}

impl Fixed {
    fn facts(&self, sim: &Simulation) -> Facts {
        let mut f = Facts::default();
        for chain in [self.root_chain, self.seg_chain] {
            for (loc, ev) in sim.protocol_events(chain) {
                if ev.xtx() != self.xtx {
                    continue;
                }
                match ev {
                    ProtocolEvent::Start(s) => {
                        f.starts += 1;
                        f.start.get_or_insert((loc, s));
                    }
                    ProtocolEvent::Segment(s) => {
                        f.segments += 1;
                        f.segment.get_or_insert((loc, s));
                    }
                    ProtocolEvent::Root(r) => {
                        f.roots += 1;
                        f.root.get_or_insert((loc, r));
                    }
                    ProtocolEvent::Signalling(_) => f.signalled = true,
                }
            }
        }
        f
    }

    fn target(&self, sim: &Simulation) -> u64 {
        let (chain, addr) = self.deployment.contract("target");
        let c = &sim.world(chain).expect("target chain").contracts[&addr];
        decode_u64(&c.storage.peek(b"value")).unwrap_or(u64::MAX)
    }

    fn complete(&self, sim: &Simulation, f: &Facts) -> bool {
        f.root.is_some() && sim.lock_residue().is_empty()
    }

    fn enabled(&self, node: &Node, f: &Facts) -> Vec<Move> {
        let tries = |m: Move| node.attempts.get(&m).copied().unwrap_or(0);
        let max = self.cfg.max_attempts;
        let mut out = Vec::new();
        if f.start.is_none() && tries(Move::Start) == 0 {
            out.push(Move::Start);
        }
        if f.start.is_some() {
            if f.segment.is_none() && tries(Move::Segment) < max {
                out.push(Move::Segment);
            }
            if f.root.is_none() {
                if f.segment.is_some() && tries(Move::Root) < max {
                    out.push(Move::Root);
                }
                if tries(Move::AbortRoot) < max {
                    out.push(Move::AbortRoot);
                }
            }
        }
        if let (Some(_), Some((_, seg))) = (&f.root, &f.segment) {
            if !seg.locked_contracts.is_empty() && !f.signalled && tries(Move::Signal) < max {
                out.push(Move::Signal);
            }
        }
        if self.cfg.mode == AttestationMode::Header {
            for dest in [self.root_chain, self.seg_chain] {
                if self.missing_header(&node.sim, f, dest).is_some() {
                    out.push(Move::Relay(dest));
                }
            }
        }
        if node.replayed < node.recorded.len() {
            out.push(Move::Replay);
        }
        if f.start.is_some() && node.ticks <= self.cfg.timeout_periods {
            out.push(Move::Tick);
        }
        out
    }

    /// Oldest event on the other chain whose header `dest` lacks.
    fn missing_header(&self, sim: &Simulation, f: &Facts, dest: ChainId) -> Option<(ChainId, u64)> {
        let mut locs = Vec::new();
        if let Some((l, _)) = &f.start {
            locs.push(*l);
        }
        if let Some((l, _)) = &f.segment {
            locs.push(*l);
        }
        if let Some((l, _)) = &f.root {
            locs.push(*l);
        }
        locs.into_iter()
            .filter(|l| l.chain != dest)
            .find(|l| !sim.header_available(dest, l.chain, l.height))
            .map(|l| (l.chain, l.height))
    }

    fn build(&self, node: &Node, f: &Facts, m: Move) -> Option<(ChainId, Transaction)> {
        let sim = &node.sim;
        let coordinator = scenarios::coordinator_account();
        let control = |chain, sender, call| {
            (
                chain,
                Transaction {
                    sender,
                    to: control_address(chain),
                    call,
                },
            )
        };
        let attest = |loc: EventLocation| sim.attest(loc).expect("recorded event");
        Some(match m {
            Move::Start => control(
                self.root_chain,
                coordinator,
                TxCall::Start {
                    tx_id: self.tx_id,
                    timeout_periods: self.cfg.timeout_periods,
                    tree: self.tree.clone(),
                },
            ),
            Move::Segment => control(
                self.seg_chain,
                coordinator,
                TxCall::Segment {
                    start: attest(f.start.as_ref()?.0),
                    path: self.seg_path.clone(),
                    children: Vec::new(),
                },
            ),
            Move::Root => control(
                self.root_chain,
                coordinator,
                TxCall::Root {
                    start: attest(f.start.as_ref()?.0),
                    children: vec![attest(f.segment.as_ref()?.0)],
                },
            ),
            Move::AbortRoot => control(
                self.root_chain,
                scenarios::agent_account(),
                TxCall::Root {
                    start: attest(f.start.as_ref()?.0),
                    children: Vec::new(),
                },
            ),
            Move::Signal => control(
                self.seg_chain,
                coordinator,
                TxCall::Signalling {
                    root: attest(f.root.as_ref()?.0),
                    segments: vec![attest(f.segment.as_ref()?.0)],
                },
            ),
            Move::Relay(dest) => {
                let (src, h) = self.missing_header(sim, f, dest)?;
                (dest, sim.relay_tx(coordinator, dest, src, h).ok()?)
            }
            Move::Replay => node.recorded[node.replayed].clone(),
            Move::Tick => return None,
        })
    }

    fn violation(&self, report: &mut CheckReport, path: &[Move], what: String) {
        if report.violations.len() < MAX_REPORTED {
            let seq: Vec<String> = path.iter().map(Move::to_string).collect();
            report
                .violations
                .push(format!("{what} after [{}]", seq.join(" ")));
        }
    }

    /// Properties that hold in every reachable state.
    fn check_state(&self, node: &Node, f: &Facts, report: &mut CheckReport) {
        let target = self.target(&node.sim);
        if f.starts > 1 || f.segments > 1 || f.roots > 1 {
            self.violation(report, &node.path, "duplicate protocol event".into());
        }
        let committed = f.root.as_ref().map(|(_, r)| r.decision == Decision::Commit);
        if target != self.initial_target {
            if target != self.source_value {
                self.violation(
                    report,
                    &node.path,
                    format!("target holds foreign value {target}"),
                );
            }
            if committed != Some(true) || !f.signalled {
                self.violation(
                    report,
                    &node.path,
                    "target updated without a signalled commit".into(),
                );
            }
        }
    }

    fn check_complete(&self, node: &Node, f: &Facts, report: &mut CheckReport) {
        let target = self.target(&node.sim);
        let commit = f
            .root
            .as_ref()
            .is_some_and(|(_, r)| r.decision == Decision::Commit);
        let expected = if commit {
            self.source_value
        } else {
            self.initial_target
        };
        if target != expected {
            self.violation(
                report,
                &node.path,
                format!("partial outcome: root commit={commit}, target={target}"),
            );
        }
        if commit {
            report.commits += 1;
        } else {
            report.aborts += 1;
        }
        report.complete += 1;
    }

    fn explore(&self, node: Node, report: &mut CheckReport) {
        report.states += 1;
        let f = self.facts(&node.sim);
        self.check_state(&node, &f, report);
        if self.complete(&node.sim, &f) {
            self.check_complete(&node, &f, report);
            return;
        }
        let moves = self.enabled(&node, &f);
        if moves.is_empty() || node.path.len() >= self.cfg.max_moves {
            report.truncated += 1;
            return;
        }
        for m in moves {
            let mut next = node.clone();
            next.path.push(m);
            let tx = self.build(&node, &f, m);
            let before = tx
                .as_ref()
                .map(|(chain, _)| next.sim.state_digest(*chain).expect("known chain"));
            let handle = tx
                .clone()
                .map(|(chain, t)| next.sim.submit(chain, t).expect("submit"));
            next.sim.advance_period();
            match m {
                Move::Tick => next.ticks += 1,
                Move::Replay => next.replayed += 1,
                Move::Relay(_) => {}
                _ => *next.attempts.entry(m).or_insert(0) += 1,
            }
            if let (Some(h), Some((chain, t))) = (handle, tx) {
                let ok = matches!(
                    next.sim.receipt(h).map(|r| &r.status),
                    Some(TxStatus::Success)
                );
                if m == Move::Replay {
                    report.replays += 1;
                    let after = next.sim.state_digest(chain).expect("known chain");
                    if ok || Some(after) != before {
                        self.violation(
                            report,
                            &next.path,
                            format!("replayed {} accepted", t.call.kind()),
                        );
                    }
                } else if ok && t.call.kind() != TxKind::Relay {
                    next.recorded.push((chain, t));
                }
            }
            self.explore(next, report);
        }
    }
}

/// Explores every ordering of the write workload's transactions up to the
/// configured move budget.
pub fn check_write(cfg: &CheckConfig) -> Result<CheckReport, ScenarioError> {
    let mut scfg = ScenarioConfig::new(ScenarioKind::Write, cfg.mode, EngineKind::Serial);
    scfg.seed = cfg.seed;
    scfg.timeout_periods = cfg.timeout_periods;
    let (sim, deployment) = scenarios::prepare(&scfg)?;
    let tree = simulate_tree(&sim.worlds(), deployment.entries[0].clone())?;
    let tx_id = TxId::derive(&format!("check-{}", cfg.seed));
    let root_chain = tree.node.chain;
    let seg_path = CallPath::root().child(1);
    let seg_chain = tree
        .resolve(&seg_path)
        .expect("write has one child")
        .node
        .chain;
    let snapshot = deployment.snapshot(&sim);
    let fixed = Fixed {
        cfg: cfg.clone(),
        xtx: XtxRef { root_chain, tx_id },
        source_value: snapshot["source"],
        initial_target: snapshot["target"],
        deployment,
        tree,
        tx_id,
        root_chain,
        seg_chain,
        seg_path,
    };
    let mut report = CheckReport::default();
    fixed.explore(
        Node {
            sim,
            path: Vec::new(),
            attempts: BTreeMap::new(),
            recorded: Vec::new(),
            replayed: 0,
            ticks: 0,
        },
        &mut report,
    );
    Ok(report)
}
