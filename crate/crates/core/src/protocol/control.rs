//! The crosschain control contract: start, segment, root and signalling.
//!
//! Every operation works on a scratch copy of the chain's [`World`], so a
//! returned error leaves the chain untouched.

use std::collections::BTreeSet;
use std::sync::Arc;

use thiserror::Error;

use crate::attestation::{AttestationError, AttestedEvent};
use crate::chain_sim::{BlockEnv, World};
use crate::crypto::Address;
use crate::ids::{ChainId, TxId, XtxRef};
use crate::storage::{Decision, StorageError};

use super::{
    AppError, CallExecutionTree, CallPath, CrosschainCtx, CrosschainTxRecord, FunctionCallSpec,
    ProtocolEvent, Role, RootDecision, RootEvent, SegmentEvent, SegmentOutcome, SignallingEvent,
    StartEvent,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ControlError {
    #[error("duplicate txId {0}")]
    DuplicateTxId(TxId),
    #[error("malformed tree: {0}")]
    MalformedTree(String),
    #[error("tree is rooted on {tree}, not {here}")]
    RootChainMismatch { tree: ChainId, here: ChainId },
    #[error("attestation failed: {0}")]
    Attestation(#[from] AttestationError),
    #[error("expected a {0} event")]
    WrongEventKind(&'static str),
    #[error("event belongs to a different crosschain transaction")]
    WrongTransaction,
    #[error("wrong chain: {0}")]
    WrongChain(String),
    #[error("path {0} does not resolve in the committed tree")]
    PathUnresolvable(CallPath),
    #[error("the root is executed by root, not segment")]
    RootPathNotSegment,
    #[error("replay: {0:?} for path {1} already consumed")]
    Replay(Role, CallPath),
    #[error("missing child segment event for path {0}")]
    MissingChild(CallPath),
    #[error("unexpected child segment event for path {0}")]
    UnexpectedChild(CallPath),
    #[error("caller is not the registered coordinator")]
    NotCoordinator,
    #[error("timed out at period {timeout}")]
    TimedOut { timeout: u64 },
    #[error("transaction already decided on this chain")]
    AlreadyDecided,
    #[error("no crosschain record for this transaction")]
    NoRecord,
    #[error("no locks held for this transaction")]
    NoLocks,
    #[error("segment event lists no locked contracts")]
    EmptySegment,
    #[error("segment events do not cover the locks held here")]
    LocksNotCovered,
    #[error(transparent)]
    Storage(#[from] StorageError),
}

pub(crate) fn start(
    world: &mut World,
    env: &BlockEnv<'_>,
    sender: Address,
    tx_id: TxId,
    timeout_periods: u64,
    tree: &CallExecutionTree,
) -> Result<ProtocolEvent, ControlError> {
    if tree.node.chain != world.chain {
        return Err(ControlError::RootChainMismatch {
            tree: tree.node.chain,
            here: world.chain,
        });
    }
    for (path, node) in tree.nodes() {
        if !world
            .registrar
            .control_contracts
            .contains_key(&node.node.chain)
        {
            return Err(ControlError::MalformedTree(format!(
                "node {path} runs on unregistered {}",
                node.node.chain
            )));
        }
    }
    if !world.contracts.contains_key(&tree.node.contract) {
        return Err(ControlError::MalformedTree(
            "root contract not deployed".into(),
        ));
    }
    let xtx = XtxRef {
        root_chain: world.chain,
        tx_id,
    };
    if world.control.records.contains_key(&xtx) {
        return Err(ControlError::DuplicateTxId(tx_id));
    }
    let mut record = CrosschainTxRecord::new(xtx);
    record.phase_guard.insert((Role::Start, CallPath::root()));
    world.control.records.insert(xtx, record);
    Ok(ProtocolEvent::Start(StartEvent {
        tx_id,
        root_chain: world.chain,
        coordinator: sender,
        timeout: env.timestamp + timeout_periods,
        tree: tree.clone(),
    }))
}

pub(crate) fn segment(
    world: &mut World,
    env: &BlockEnv<'_>,
    sender: Address,
    start_att: &AttestedEvent,
    path: &CallPath,
    child_atts: &[AttestedEvent],
) -> Result<ProtocolEvent, ControlError> {
    let start = verify_start(world, env, start_att)?;
    if path.is_root() {
        return Err(ControlError::RootPathNotSegment);
    }
    let node = start
        .tree
        .resolve(path)
        .ok_or_else(|| ControlError::PathUnresolvable(path.clone()))?;
    if node.node.chain != world.chain {
        return Err(ControlError::WrongChain(format!(
            "segment {path} runs on {}",
            node.node.chain
        )));
    }
    if world.restrict_to_coordinator && sender != start.coordinator {
        return Err(ControlError::NotCoordinator);
    }
    if env.timestamp > start.timeout {
        return Err(ControlError::TimedOut {
            timeout: start.timeout,
        });
    }
    let xtx = xtx_of(&start);
    if let Some(rec) = world.control.records.get(&xtx) {
        if rec.consumed(Role::Segment, path) {
            return Err(ControlError::Replay(Role::Segment, path.clone()));
        }
        if rec.root_decision != RootDecision::Pending {
            return Err(ControlError::AlreadyDecided);
        }
    }
    let children = collect_children(world, env, xtx, path, node, child_atts)?;

    let (outcome, locked) = if let Some(failed) = children.iter().find(|c| c.is_error()) {
        (
            SegmentOutcome::Error(format!("child {} failed", failed.path)),
            Vec::new(),
        )
    } else {
        match execute_call(world, env, xtx, node, &children) {
            Ok((ret, wrote)) => {
                let locked = if wrote {
                    vec![node.node.contract]
                } else {
                    Vec::new()
                };
                (SegmentOutcome::Success(ret), locked)
            }
            Err(e) => (SegmentOutcome::Error(e.to_string()), Vec::new()),
        }
    };

    let rec = world
        .control
        .records
        .entry(xtx)
        .or_insert_with(|| CrosschainTxRecord::new(xtx));
    rec.phase_guard.insert((Role::Segment, path.clone()));
    rec.locked_here.extend(locked.iter().copied());
    Ok(ProtocolEvent::Segment(SegmentEvent {
        tx_id: start.tx_id,
        root_chain: start.root_chain,
        path: path.clone(),
        outcome,
        locked_contracts: locked,
    }))
}

pub(crate) fn root(
    world: &mut World,
    env: &BlockEnv<'_>,
    sender: Address,
    start_att: &AttestedEvent,
    child_atts: &[AttestedEvent],
) -> Result<ProtocolEvent, ControlError> {
    let start = verify_start(world, env, start_att)?;
    if start.root_chain != world.chain {
        return Err(ControlError::WrongChain(format!(
            "root runs on {}",
            start.root_chain
        )));
    }
    let xtx = xtx_of(&start);
    let rec = world
        .control
        .records
        .get(&xtx)
        .ok_or(ControlError::NoRecord)?;
    if rec.consumed(Role::Root, &CallPath::root()) || rec.root_decision != RootDecision::Pending {
        return Err(ControlError::Replay(Role::Root, CallPath::root()));
    }

    let decision = if env.timestamp > start.timeout {
        Decision::Abort
    } else {
        if sender != start.coordinator {
            return Err(ControlError::NotCoordinator);
        }
        let children =
            collect_children(world, env, xtx, &CallPath::root(), &start.tree, child_atts)?;
        if children.iter().any(|c| c.is_error()) {
            Decision::Abort
        } else {
            match execute_call(world, env, xtx, &start.tree, &children) {
                Ok((_, wrote)) => {
                    if wrote {
                        let rec = world.control.records.get_mut(&xtx).expect("checked above");
                        rec.locked_here.insert(start.tree.node.contract);
                    }
                    Decision::Commit
                }
                Err(_) => Decision::Abort,
            }
        }
    };

    let rec = world.control.records.get_mut(&xtx).expect("checked above");
    let locked = std::mem::take(&mut rec.locked_here);
    rec.phase_guard.insert((Role::Root, CallPath::root()));
    rec.root_decision = decision.into();
    for addr in &locked {
        if let Some(c) = world.contracts.get_mut(addr) {
            c.storage.signal(decision, xtx)?;
        }
    }
    Ok(ProtocolEvent::Root(RootEvent {
        tx_id: start.tx_id,
        root_chain: start.root_chain,
        decision,
    }))
}

pub(crate) fn signalling(
    world: &mut World,
    env: &BlockEnv<'_>,
    root_att: &AttestedEvent,
    segment_atts: &[AttestedEvent],
) -> Result<ProtocolEvent, ControlError> {
    let ev = world.registrar.verify(env.scheme, env.headers, root_att)?;
    let root_ev = match ev {
        ProtocolEvent::Root(r) => r,
        _ => return Err(ControlError::WrongEventKind("root")),
    };
    if root_att.source_chain != root_ev.root_chain {
        return Err(ControlError::WrongChain(
            "root event not from its root chain".into(),
        ));
    }
    let xtx = XtxRef {
        root_chain: root_ev.root_chain,
        tx_id: root_ev.tx_id,
    };
    let rec = world
        .control
        .records
        .get(&xtx)
        .ok_or(ControlError::NoLocks)?;
    if rec.consumed(Role::Signalling, &CallPath::root()) {
        return Err(ControlError::Replay(Role::Signalling, CallPath::root()));
    }
    if rec.locked_here.is_empty() {
        return Err(ControlError::NoLocks);
    }
    let mut covered = BTreeSet::new();
    for att in segment_atts {
        let seg = match world.registrar.verify(env.scheme, env.headers, att)? {
            ProtocolEvent::Segment(s) => s,
            _ => return Err(ControlError::WrongEventKind("segment")),
        };
        if seg.tx_id != xtx.tx_id || seg.root_chain != xtx.root_chain {
            return Err(ControlError::WrongTransaction);
        }
        if att.source_chain != world.chain {
            return Err(ControlError::WrongChain(
                "segment event from another chain".into(),
            ));
        }
        if seg.locked_contracts.is_empty() {
            return Err(ControlError::EmptySegment);
        }
        covered.extend(seg.locked_contracts);
    }
    if !rec.locked_here.is_subset(&covered) {
        return Err(ControlError::LocksNotCovered);
    }

    let rec = world.control.records.get_mut(&xtx).expect("checked above");
    let locked = std::mem::take(&mut rec.locked_here);
    rec.phase_guard.insert((Role::Signalling, CallPath::root()));
    rec.root_decision = root_ev.decision.into();
    for addr in &locked {
        if let Some(c) = world.contracts.get_mut(addr) {
            c.storage.signal(root_ev.decision, xtx)?;
        }
    }
    Ok(ProtocolEvent::Signalling(SignallingEvent {
        tx_id: xtx.tx_id,
        root_chain: xtx.root_chain,
        unlocked_contracts: locked.into_iter().collect(),
    }))
}

fn xtx_of(start: &StartEvent) -> XtxRef {
    XtxRef {
        root_chain: start.root_chain,
        tx_id: start.tx_id,
    }
}

fn verify_start(
    world: &World,
    env: &BlockEnv<'_>,
    att: &AttestedEvent,
) -> Result<StartEvent, ControlError> {
    match world.registrar.verify(env.scheme, env.headers, att)? {
        ProtocolEvent::Start(s) if att.source_chain == s.root_chain => Ok(s),
        ProtocolEvent::Start(_) => Err(ControlError::WrongChain(
            "start event not from its root chain".into(),
        )),
        _ => Err(ControlError::WrongEventKind("start")),
    }
}

/// Verifies child segment events and returns them in call order. Exactly the
/// direct children of `path` must be present, each from the chain it runs on.
fn collect_children(
    world: &World,
    env: &BlockEnv<'_>,
    xtx: XtxRef,
    path: &CallPath,
    node: &CallExecutionTree,
    atts: &[AttestedEvent],
) -> Result<Vec<SegmentEvent>, ControlError> {
    let mut slots: Vec<Option<SegmentEvent>> = vec![None; node.children.len()];
    for att in atts {
        let seg = match world.registrar.verify(env.scheme, env.headers, att)? {
            ProtocolEvent::Segment(s) => s,
            _ => return Err(ControlError::WrongEventKind("segment")),
        };
        if seg.tx_id != xtx.tx_id || seg.root_chain != xtx.root_chain {
            return Err(ControlError::WrongTransaction);
        }
        let index = match (seg.path.parent(), seg.path.0.last()) {
            (Some(parent), Some(&i)) if parent == *path => i as usize - 1,
            _ => return Err(ControlError::UnexpectedChild(seg.path)),
        };
        let Some(slot) = slots.get_mut(index) else {
            return Err(ControlError::UnexpectedChild(seg.path));
        };
        if slot.is_some() {
            return Err(ControlError::UnexpectedChild(seg.path));
        }
        if att.source_chain != node.children[index].node.chain {
            return Err(ControlError::WrongChain(format!(
                "segment {} attested from {}",
                seg.path, att.source_chain
            )));
        }
        *slot = Some(seg);
    }
    slots
        .into_iter()
        .enumerate()
        .map(|(i, s)| s.ok_or_else(|| ControlError::MissingChild(path.child(i as u32 + 1))))
        .collect()
}

/// Runs one node's function under the crosschain context. Storage changes are
/// kept only on success. Returns the result and whether storage was written.
fn execute_call(
    world: &mut World,
    env: &BlockEnv<'_>,
    xtx: XtxRef,
    node: &CallExecutionTree,
    children: &[SegmentEvent],
) -> Result<(Vec<u8>, bool), AppError> {
    let call = &node.node;
    let chain = world.chain;
    if world
        .forced_reverts
        .contains(&(call.contract, call.function.clone()))
    {
        return Err(AppError::Forced(call.to_string()));
    }
    let contract = world
        .contracts
        .get_mut(&call.contract)
        .ok_or(AppError::UnknownContract(call.contract, chain))?;
    if !contract.logic.functions().contains(&call.function.as_str()) {
        return Err(AppError::UnknownFunction(call.function.clone()));
    }
    let answers = child_answers(node, children);
    let logic = Arc::clone(&contract.logic);
    let mut storage = contract.storage.clone();
    let mut ctx = CrosschainCtx {
        storage: &mut storage,
        this: call.contract,
        chain,
        xtx,
        timestamp: env.timestamp,
        children: &answers,
        cursor: 0,
        wrote: false,
    };
    let ret = logic.call(&mut ctx, &call.function, &call.args)?;
    ctx.finish()?;
    let wrote = ctx.wrote;
    contract.storage = storage;
    Ok((ret, wrote))
}

fn child_answers(
    node: &CallExecutionTree,
    children: &[SegmentEvent],
) -> Vec<(FunctionCallSpec, Vec<u8>)> {
    node.children
        .iter()
        .zip(children)
        .map(|(expected, seg)| {
            let ret = match &seg.outcome {
                SegmentOutcome::Success(ret) => ret.clone(),
                SegmentOutcome::Error(_) => Vec::new(),
            };
            (expected.node.clone(), ret)
        })
        .collect()
}
