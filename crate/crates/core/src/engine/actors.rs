use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::chain_sim::{
    control_address, EventLocation, SimError, Simulation, Transaction, TxCall, TxHandle, TxKind,
};
use crate::crypto::Address;
use crate::ids::{ChainId, TxId, XtxRef};
use crate::protocol::{CallPath, ProtocolEvent, RootEvent, SegmentEvent, StartEvent};

use super::plan::{EnginePlan, Step};

/// Where an injected coordinator crash happens.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrashPoint {
    BeforeStart,
    AfterStart,
    /// After this many segment transactions have been submitted.
    AfterSegments(u32),
    AfterRoot,
}

impl CrashPoint {
    /// Number of protocol transactions submitted before the crash.
    fn budget(self, segment_count: usize) -> usize {
        match self {
            CrashPoint::BeforeStart => 0,
            CrashPoint::AfterStart => 1,
            CrashPoint::AfterSegments(k) => 1 + (k as usize).min(segment_count),
            CrashPoint::AfterRoot => 2 + segment_count,
        }
    }
}

impl fmt::Display for CrashPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CrashPoint::BeforeStart => f.write_str("before-start"),
            CrashPoint::AfterStart => f.write_str("after-start"),
            CrashPoint::AfterSegments(k) => write!(f, "after-segments:{k}"),
            CrashPoint::AfterRoot => f.write_str("after-root"),
        }
    }
}

impl std::str::FromStr for CrashPoint {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "before-start" => Ok(CrashPoint::BeforeStart),
            "after-start" => Ok(CrashPoint::AfterStart),
            "after-root" => Ok(CrashPoint::AfterRoot),
            other => other
                .strip_prefix("after-segments:")
                .and_then(|k| k.parse().ok())
                .map(CrashPoint::AfterSegments)
                .ok_or_else(|| format!("unknown crash point {other:?}")),
        }
    }
}

/// One transaction an actor put on a chain.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Submission {
    /// Period (block timestamp) the transaction lands in.
    pub period: u64,
    pub actor: String,
    pub kind: TxKind,
    pub label: String,
    pub handle: TxHandle,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum ActorStatus {
    Running,
    Done,
    Crashed,
    Halted(String),
}

/// Protocol transaction waiting for its inputs to become provable.
enum Planned {
    Start,
    Segment {
        path: CallPath,
        start: EventLocation,
        children: Vec<EventLocation>,
    },
    Root {
        start: EventLocation,
        children: Vec<EventLocation>,
    },
    Signalling {
        root: EventLocation,
        segments: Vec<EventLocation>,
    },
}

impl Planned {
    fn needs(&self) -> Vec<EventLocation> {
        match self {
            Planned::Start => Vec::new(),
            Planned::Segment {
                start, children, ..
            }
            | Planned::Root { start, children } => std::iter::once(*start)
                .chain(children.iter().copied())
                .collect(),
            Planned::Signalling { root, segments } => std::iter::once(*root)
                .chain(segments.iter().copied())
                .collect(),
        }
    }

    fn kind(&self) -> TxKind {
        match self {
            Planned::Start => TxKind::Start,
            Planned::Segment { .. } => TxKind::Segment,
            Planned::Root { .. } => TxKind::Root,
            Planned::Signalling { .. } => TxKind::Signalling,
        }
    }

    fn label(&self) -> String {
        match self {
            Planned::Segment { path, .. } => format!("segment {path}"),
            other => other.kind().to_string(),
        }
    }

    fn build(
        self,
        sim: &Simulation,
        tx_id: TxId,
        timeout_periods: u64,
        plan: &EnginePlan,
    ) -> Result<TxCall, SimError> {
        let attest_all = |locs: Vec<EventLocation>| -> Result<Vec<_>, SimError> {
            locs.into_iter().map(|l| sim.attest(l)).collect()
        };
        Ok(match self {
            Planned::Start => TxCall::Start {
                tx_id,
                timeout_periods,
                tree: plan.tree.clone(),
            },
            Planned::Segment {
                path,
                start,
                children,
            } => TxCall::Segment {
                start: sim.attest(start)?,
                path,
                children: attest_all(children)?,
            },
            Planned::Root { start, children } => TxCall::Root {
                start: sim.attest(start)?,
                children: attest_all(children)?,
            },
            Planned::Signalling { root, segments } => TxCall::Signalling {
                root: sim.attest(root)?,
                segments: attest_all(segments)?,
            },
        })
    }
}

/// Headers that must be relayed before transactions on the given chains can
/// prove the given events, as `(destination, source, height)`.
fn missing_headers(
    sim: &Simulation,
    needs: &[(ChainId, Vec<EventLocation>)],
) -> BTreeSet<(ChainId, ChainId, u64)> {
    needs
        .iter()
        .flat_map(|(dest, locs)| locs.iter().map(move |l| (*dest, l.chain, l.height)))
        .filter(|(dest, src, h)| !sim.header_available(*dest, *src, *h))
        .collect()
}

fn submit_relays(
    sim: &mut Simulation,
    sender: Address,
    actor: &str,
    missing: &BTreeSet<(ChainId, ChainId, u64)>,
    log: &mut Vec<Submission>,
    inflight: &mut Vec<(TxKind, TxHandle)>,
) -> Result<(), SimError> {
    for (dest, src, h) in missing {
        let tx = sim.relay_tx(sender, *dest, *src, *h)?;
        let handle = sim.submit(*dest, tx)?;
        log.push(Submission {
            period: sim.next_timestamp(),
            actor: actor.to_string(),
            kind: TxKind::Relay,
            label: format!("relay {src}@{h} to {dest}"),
            handle,
        });
        inflight.push((TxKind::Relay, handle));
    }
    Ok(())
}

fn event_at(sim: &Simulation, handle: TxHandle) -> Result<(EventLocation, ProtocolEvent), String> {
    let receipt = sim
        .receipt(handle)
        .ok_or_else(|| format!("no receipt for {handle:?}"))?;
    if let crate::chain_sim::TxStatus::Failure(reason) = &receipt.status {
        return Err(reason.clone());
    }
    let log = receipt.events.first().ok_or("receipt carries no event")?;
    let ev = ProtocolEvent::from_log(log).map_err(|e| e.to_string())?;
    let loc = EventLocation {
        chain: handle.chain,
        height: handle.height,
        receipt_index: handle.index,
        event_index: 0,
    };
    Ok((loc, ev))
}

/// The application's off-chain driver for one crosschain transaction.
pub struct Coordinator {
    pub name: String,
    pub account: Address,
    pub tx_id: TxId,
    pub timeout_periods: u64,
    pub plan: EnginePlan,
    pub status: ActorStatus,
    pub log: Vec<Submission>,
    budget: Option<usize>,
    sent: usize,
    step: usize,
    relayed_for_step: bool,
    inflight: Vec<(TxKind, TxHandle)>,
    start: Option<(EventLocation, StartEvent)>,
    segments: BTreeMap<CallPath, (EventLocation, SegmentEvent)>,
    root: Option<(EventLocation, RootEvent)>,
}

impl Coordinator {
    pub fn new(
        name: &str,
        account: Address,
        tx_id: TxId,
        plan: EnginePlan,
        timeout_periods: u64,
        crash: Option<CrashPoint>,
    ) -> Self {
        let segment_count = plan.tree.nodes().len() - 1;
        Self {
            name: name.to_string(),
            account,
            tx_id,
            timeout_periods,
            budget: crash.map(|c| c.budget(segment_count)),
            plan,
            status: ActorStatus::Running,
            log: Vec::new(),
            sent: 0,
            step: 0,
            relayed_for_step: false,
            inflight: Vec::new(),
            start: None,
            segments: BTreeMap::new(),
            root: None,
        }
    }

    pub fn xtx(&self) -> XtxRef {
        XtxRef {
            root_chain: self.plan.tree.node.chain,
            tx_id: self.tx_id,
        }
    }

    pub fn failed(&self) -> bool {
        matches!(self.status, ActorStatus::Crashed | ActorStatus::Halted(_))
    }

    pub fn idle(&self) -> bool {
        self.inflight.is_empty() && self.status != ActorStatus::Running
    }

    pub fn root_decision(&self) -> Option<&RootEvent> {
        self.root.as_ref().map(|(_, r)| r)
    }

    fn collect(&mut self, sim: &Simulation) {
        for (kind, handle) in std::mem::take(&mut self.inflight) {
            if kind == TxKind::Relay {
                if let Some(r) = sim.receipt(handle) {
                    if let crate::chain_sim::TxStatus::Failure(reason) = &r.status {
                        self.halt(format!("relay failed: {reason}"));
                    }
                }
                continue;
            }
            match event_at(sim, handle) {
                Ok((loc, ProtocolEvent::Start(s))) => self.start = Some((loc, s)),
                Ok((loc, ProtocolEvent::Segment(s))) => {
                    self.segments.insert(s.path.clone(), (loc, s));
                }
                Ok((loc, ProtocolEvent::Root(r))) => self.root = Some((loc, r)),
                Ok((_, ProtocolEvent::Signalling(_))) => {}
                Err(reason) => self.halt(format!("{kind} failed: {reason}")),
            }
        }
    }

    fn halt(&mut self, reason: String) {
        if !self.failed() {
            self.status = ActorStatus::Halted(reason);
        }
    }

    pub fn tick(&mut self, sim: &mut Simulation) {
        self.collect(sim);
        if self.status != ActorStatus::Running {
            return;
        }
        if self.budget.is_some_and(|b| self.sent >= b) {
            self.status = ActorStatus::Crashed;
            return;
        }
        let past_timeout = self
            .start
            .as_ref()
            .is_some_and(|(_, s)| sim.next_timestamp() > s.timeout);
        if past_timeout && self.step < self.plan.root_step() {
            self.step = self.plan.root_step();
            self.relayed_for_step = false;
        }
        let Some(step) = self.plan.schedule.get(self.step).cloned() else {
            self.status = ActorStatus::Done;
            return;
        };
        let planned = match self.plan_step(&step, past_timeout) {
            Ok(p) => p,
            Err(reason) => {
                self.halt(reason);
                return;
            }
        };
        if planned.is_empty() {
            self.step += 1;
            self.status = ActorStatus::Done;
            return;
        }

        let needs: Vec<(ChainId, Vec<EventLocation>)> =
            planned.iter().map(|(c, p)| (*c, p.needs())).collect();
        let missing = missing_headers(sim, &needs);
        if !missing.is_empty() {
            if self.relayed_for_step {
                self.halt("headers still unavailable after relay".into());
                return;
            }
            let (account, name) = (self.account, self.name.clone());
            if let Err(e) = submit_relays(
                sim,
                account,
                &name,
                &missing,
                &mut self.log,
                &mut self.inflight,
            ) {
                self.halt(e.to_string());
            }
            self.relayed_for_step = true;
            return;
        }

        for (chain, p) in planned {
            if self.budget.is_some_and(|b| self.sent >= b) {
                self.status = ActorStatus::Crashed;
                return;
            }
            let (kind, label) = (p.kind(), p.label());
            let call = match p.build(sim, self.tx_id, self.timeout_periods, &self.plan) {
                Ok(c) => c,
                Err(e) => {
                    self.halt(e.to_string());
                    return;
                }
            };
            let tx = Transaction {
                sender: self.account,
                to: control_address(chain),
                call,
            };
            match sim.submit(chain, tx) {
                Ok(handle) => {
                    self.log.push(Submission {
                        period: sim.next_timestamp(),
                        actor: self.name.clone(),
                        kind,
                        label,
                        handle,
                    });
                    self.inflight.push((kind, handle));
                    self.sent += 1;
                }
                Err(e) => {
                    self.halt(e.to_string());
                    return;
                }
            }
        }
        self.step += 1;
        self.relayed_for_step = false;
    }

    fn plan_step(
        &self,
        step: &Step,
        past_timeout: bool,
    ) -> Result<Vec<(ChainId, Planned)>, String> {
        let tree = &self.plan.tree;
        let start_loc = || {
            self.start
                .as_ref()
                .map(|(l, _)| *l)
                .ok_or_else(|| "start event not yet observed".to_string())
        };
        let child_locs = |path: &CallPath| -> Result<Vec<EventLocation>, String> {
            let node = tree.resolve(path).ok_or("path not in tree")?;
            (1..=node.children.len() as u32)
                .map(|i| {
                    let child = path.child(i);
                    self.segments
                        .get(&child)
                        .map(|(l, _)| *l)
                        .ok_or_else(|| format!("segment {child} not yet observed"))
                })
                .collect()
        };
        Ok(match step {
            Step::Start => vec![(tree.node.chain, Planned::Start)],
            Step::Segments(paths) => paths
                .iter()
                .map(|p| {
                    let node = tree.resolve(p).ok_or("path not in tree")?;
                    Ok((
                        node.node.chain,
                        Planned::Segment {
                            path: p.clone(),
                            start: start_loc()?,
                            children: child_locs(p)?,
                        },
                    ))
                })
                .collect::<Result<_, String>>()?,
            Step::Root => {
                let children = if past_timeout {
                    Vec::new()
                } else {
                    child_locs(&CallPath::root())?
                };
                vec![(
                    tree.node.chain,
                    Planned::Root {
                        start: start_loc()?,
                        children,
                    },
                )]
            }
            Step::Signalling => {
                let root = self
                    .root
                    .as_ref()
                    .map(|(l, _)| *l)
                    .ok_or("root event not yet observed")?;
                let mut by_chain: BTreeMap<ChainId, Vec<EventLocation>> = BTreeMap::new();
                for (loc, seg) in self.segments.values() {
                    if loc.chain != tree.node.chain && !seg.locked_contracts.is_empty() {
                        by_chain.entry(loc.chain).or_default().push(*loc);
                    }
                }
                by_chain
                    .into_iter()
                    .map(|(chain, segments)| (chain, Planned::Signalling { root, segments }))
                    .collect()
            }
        })
    }
}

/// Any account that finishes a transaction whose coordinator disappeared:
/// after the timeout it submits an aborting root, then signals every chain
/// still holding locks.
pub struct TimeoutAgent {
    pub name: String,
    pub account: Address,
    pub xtx: XtxRef,
    pub chains: BTreeSet<ChainId>,
    pub log: Vec<Submission>,
    pub finished: bool,
    /// Set when one of the agent's own transactions was rejected; it stops
    /// rather than resubmitting the same thing every period.
    pub gave_up: Option<String>,
    inflight: Vec<(TxKind, TxHandle)>,
}

impl TimeoutAgent {
    pub fn new(name: &str, account: Address, xtx: XtxRef, chains: BTreeSet<ChainId>) -> Self {
        Self {
            name: name.to_string(),
            account,
            xtx,
            chains,
            log: Vec::new(),
            finished: false,
            gave_up: None,
            inflight: Vec::new(),
        }
    }

    pub fn idle(&self, coordinator: &Coordinator) -> bool {
        self.inflight.is_empty() && (self.finished || !coordinator.failed())
    }

    fn find<T>(
        &self,
        sim: &Simulation,
        chain: ChainId,
        pick: impl Fn(&ProtocolEvent) -> Option<T>,
    ) -> Vec<(EventLocation, T)> {
        sim.protocol_events(chain)
            .into_iter()
            .filter(|(_, e)| e.xtx() == self.xtx)
            .filter_map(|(l, e)| pick(&e).map(|t| (l, t)))
            .collect()
    }

    pub fn tick(&mut self, sim: &mut Simulation, coordinator: &Coordinator) {
        if self.finished || !coordinator.failed() || !coordinator.inflight.is_empty() {
            return;
        }
        for (_, h) in std::mem::take(&mut self.inflight) {
            if let Some(crate::chain_sim::TxStatus::Failure(reason)) =
                sim.receipt(h).map(|r| &r.status)
            {
                self.gave_up = Some(reason.clone());
                self.finished = true;
                return;
            }
        }
        let root_chain = self.xtx.root_chain;
        let Some((start_loc, start)) = self
            .find(sim, root_chain, |e| e.as_start().cloned())
            .into_iter()
            .next()
        else {
            self.finished = true;
            return;
        };
        let Some((root_loc, _)) = self
            .find(sim, root_chain, |e| e.as_root().cloned())
            .into_iter()
            .next()
        else {
            if sim.next_timestamp() > start.timeout {
                if let Ok(att) = sim.attest(start_loc) {
                    self.send(
                        sim,
                        root_chain,
                        TxKind::Root,
                        "root (timeout)".into(),
                        TxCall::Root {
                            start: att,
                            children: Vec::new(),
                        },
                    );
                }
            }
            return;
        };

        let mut targets: BTreeMap<ChainId, Vec<EventLocation>> = BTreeMap::new();
        for chain in self.chains.iter().copied().filter(|c| *c != root_chain) {
            let signalled = !self
                .find(sim, chain, |e| {
                    matches!(e, ProtocolEvent::Signalling(_)).then_some(())
                })
                .is_empty();
            if signalled {
                continue;
            }
            let locked: Vec<EventLocation> = self
                .find(sim, chain, |e| e.as_segment().cloned())
                .into_iter()
                .filter(|(_, s)| !s.locked_contracts.is_empty())
                .map(|(l, _)| l)
                .collect();
            if !locked.is_empty() {
                targets.insert(chain, locked);
            }
        }
        if targets.is_empty() {
            self.finished = true;
            return;
        }
        let needs: Vec<(ChainId, Vec<EventLocation>)> =
            targets.keys().map(|c| (*c, vec![root_loc])).collect();
        let missing = missing_headers(sim, &needs);
        if !missing.is_empty() {
            let (account, name) = (self.account, self.name.clone());
            let _ = submit_relays(
                sim,
                account,
                &name,
                &missing,
                &mut self.log,
                &mut self.inflight,
            );
            return;
        }
        for (chain, segs) in targets {
            let call = (|| -> Result<TxCall, SimError> {
                Ok(TxCall::Signalling {
                    root: sim.attest(root_loc)?,
                    segments: segs
                        .iter()
                        .map(|l| sim.attest(*l))
                        .collect::<Result<_, _>>()?,
                })
            })();
            if let Ok(call) = call {
                self.send(
                    sim,
                    chain,
                    TxKind::Signalling,
                    "signalling (agent)".into(),
                    call,
                );
            }
        }
    }

    fn send(
        &mut self,
        sim: &mut Simulation,
        chain: ChainId,
        kind: TxKind,
        label: String,
        call: TxCall,
    ) {
        let tx = Transaction {
            sender: self.account,
            to: control_address(chain),
            call,
        };
        if let Ok(handle) = sim.submit(chain, tx) {
            self.log.push(Submission {
                period: sim.next_timestamp(),
                actor: self.name.clone(),
                kind,
                label,
                handle,
            });
            self.inflight.push((kind, handle));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crash_point_round_trip() {
        for s in [
            "before-start",
            "after-start",
            "after-segments:2",
            "after-root",
        ] {
            assert_eq!(s.parse::<CrashPoint>().unwrap().to_string(), s);
        }
        assert!("after-lunch".parse::<CrashPoint>().is_err());
    }

    #[test]
    fn crash_budgets() {
        assert_eq!(CrashPoint::BeforeStart.budget(4), 0);
        assert_eq!(CrashPoint::AfterSegments(2).budget(4), 3);
        assert_eq!(CrashPoint::AfterSegments(9).budget(4), 5);
        assert_eq!(CrashPoint::AfterRoot.budget(4), 6);
    }
}
