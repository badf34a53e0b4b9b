//! Shared generators and reference models for the integration suites.
#![allow(dead_code)]

use std::collections::BTreeMap;

use gpact_core::attestation::{AttestationMode, AttestedEvent, EventProof};
use gpact_core::chain_sim::{Simulation, TxKind, TxStatus};
use gpact_core::engine::{CrashPoint, EngineKind};
use gpact_core::ids::{ChainId, TxId, XtxRef};
use gpact_core::protocol::CallPath;
use gpact_core::scenarios::{execute, Fault, ScenarioConfig, ScenarioKind};
use gpact_core::storage::{Decision, LockState, LockableContractState, StorageError};
use proptest::prelude::*;
use rand::seq::IndexedRandom;
use rand::{Rng, RngCore};

// ---- lockable storage reference model ----

#[derive(Clone, Debug)]
pub enum Op {
    Read(u8),
    ReadIn(u8, u8),
    Write(u8, u8, Option<u8>),
    Signal(bool, u8),
}

pub fn op_strategy() -> impl Strategy<Value = Op> {
    let key = 0u8..4;
    let ctx = 0u8..3;
    prop_oneof![
        key.clone().prop_map(Op::Read),
        (key.clone(), ctx.clone()).prop_map(|(k, c)| Op::ReadIn(k, c)),
        (key, any::<u8>(), proptest::option::of(ctx.clone()))
            .prop_map(|(k, v, c)| Op::Write(k, v, c)),
        (any::<bool>(), ctx).prop_map(|(commit, c)| Op::Signal(commit, c)),
    ]
}

pub fn sequence_strategy() -> impl Strategy<Value = Vec<Op>> {
    proptest::collection::vec(op_strategy(), 0..40)
}

fn ctx(i: u8) -> XtxRef {
    XtxRef {
        root_chain: ChainId(1),
        tx_id: TxId::derive(&format!("model-{i}")),
    }
}

#[derive(Debug, PartialEq, Eq)]
enum ModelErr {
    Locked(u8),
    NotLocked,
}

/// The obvious semantics: committed values, an owner, and an ordered log of
/// provisional writes that is replayed on commit.
#[derive(Default)]
struct Model {
    committed: BTreeMap<u8, u8>,
    owner: Option<u8>,
    log: Vec<(u8, u8)>,
}

impl Model {
    fn committed_value(&self, k: u8) -> Vec<u8> {
        self.committed.get(&k).map(|v| vec![*v]).unwrap_or_default()
    }

    fn apply(&mut self, op: &Op) -> Result<Vec<u8>, ModelErr> {
        match *op {
            Op::Read(k) => match self.owner {
                Some(o) => Err(ModelErr::Locked(o)),
                None => Ok(self.committed_value(k)),
            },
            Op::ReadIn(k, c) => match self.owner {
                Some(o) if o != c => Err(ModelErr::Locked(o)),
                Some(_) => Ok(self
                    .log
                    .iter()
                    .rev()
                    .find(|(lk, _)| *lk == k)
                    .map(|(_, v)| vec![*v])
                    .unwrap_or_else(|| self.committed_value(k))),
                None => Ok(self.committed_value(k)),
            },
            Op::Write(k, v, c) => match (self.owner, c) {
                (None, None) => {
                    self.committed.insert(k, v);
                    Ok(Vec::new())
                }
                (None, Some(c)) => {
                    self.owner = Some(c);
                    self.log.push((k, v));
                    Ok(Vec::new())
                }
                (Some(o), Some(c)) if o == c => {
                    self.log.push((k, v));
                    Ok(Vec::new())
                }
                (Some(o), _) => Err(ModelErr::Locked(o)),
            },
            Op::Signal(commit, c) => match self.owner {
                None => Err(ModelErr::NotLocked),
                Some(o) if o != c => Err(ModelErr::Locked(o)),
                Some(_) => {
                    if commit {
                        for (k, v) in self.log.drain(..) {
                            self.committed.insert(k, v);
                        }
                    }
                    self.log.clear();
                    self.owner = None;
                    Ok(Vec::new())
                }
            },
        }
    }
}

fn real_apply(s: &mut LockableContractState, op: &Op) -> Result<Vec<u8>, ModelErr> {
    let map = |e: StorageError| match e {
        StorageError::Locked(x) => {
            ModelErr::Locked((0..3).find(|i| ctx(*i) == x).expect("known context"))
        }
        StorageError::NotLocked => ModelErr::NotLocked,
    };
    match *op {
        Op::Read(k) => s.read(&[k]).map_err(map),
        Op::ReadIn(k, c) => s.read_in_crosschain(&[k], ctx(c)).map_err(map),
        Op::Write(k, v, c) => s
            .write(&[k], vec![v], c.map(ctx))
            .map(|_| Vec::new())
            .map_err(map),
        Op::Signal(commit, c) => {
            let d = if commit {
                Decision::Commit
            } else {
                Decision::Abort
            };
            s.signal(d, ctx(c)).map(|_| Vec::new()).map_err(map)
        }
    }
}

/// Runs `ops` against both implementations, comparing every result and the
/// visible state after each step.
pub fn check_against_model(ops: &[Op]) -> Result<(), String> {
    let mut real = LockableContractState::new();
    let mut model = Model::default();
    for (i, op) in ops.iter().enumerate() {
        let want = model.apply(op);
        let got = real_apply(&mut real, op);
        if want != got {
            return Err(format!("step {i} {op:?}: model {want:?}, storage {got:?}"));
        }
        let owner = match real.lock() {
            LockState::Unlocked => None,
            LockState::LockedBy(x) => (0..3).find(|c| ctx(*c) == x),
        };
        if owner != model.owner {
            return Err(format!(
                "step {i}: owner {owner:?} vs model {:?}",
                model.owner
            ));
        }
        for k in 0..4u8 {
            if real.peek(&[k]) != model.committed_value(k) {
                return Err(format!("step {i}: committed value of key {k} diverged"));
            }
        }
    }
    Ok(())
}

// ---- attestation soundness ----

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum CaseKind {
    SubThreshold,
    HeaderNotRelayed,
    PayloadBitFlip,
    SignatureBitFlip,
    MerklePathBitFlip,
}

pub struct Baseline {
    pub sim: Simulation,
    pub valid: Vec<(ChainId, AttestedEvent)>,
}

impl Baseline {
    pub fn verify(&self, dest: ChainId, att: &AttestedEvent) -> bool {
        let world = self.sim.world(dest).unwrap();
        let headers = &self.sim.chain(dest).unwrap().headers;
        world
            .registrar
            .verify(self.sim.scheme(), headers, att)
            .is_ok()
    }
}

/// Completed trade runs whose recorded events verify on some other chain.
pub fn baseline(mode: AttestationMode) -> Baseline {
    let cfg = ScenarioConfig::new(ScenarioKind::Trade, mode, EngineKind::Serial);
    let sim = execute(&cfg).unwrap().sim;
    let mut valid = Vec::new();
    for src in sim.chain_ids() {
        for (loc, _) in sim.protocol_events(src) {
            let att = sim.attest(loc).unwrap();
            for dest in sim.chain_ids().into_iter().filter(|d| *d != src) {
                valid.push((dest, att.clone()));
            }
        }
    }
    let mut b = Baseline { sim, valid };
    let valid: Vec<_> = b
        .valid
        .iter()
        .filter(|(d, a)| b.verify(*d, a))
        .cloned()
        .collect();
    assert!(
        !valid.is_empty(),
        "no verifiable baseline events in {mode} mode"
    );
    b.valid = valid;
    b
}

fn flip_bit(bytes: &mut [u8], rng: &mut impl RngCore) {
    let bit = rng.random_range(0..bytes.len() * 8);
    bytes[bit / 8] ^= 1 << (bit % 8);
}

/// Builds one invalid attestation. Returns whether the registrar accepted it.
pub fn soundness_case(
    direct: &Baseline,
    header: &Baseline,
    kind: CaseKind,
    rng: &mut impl RngCore,
) -> bool {
    match kind {
        CaseKind::SubThreshold => {
            let (dest, att) = direct.valid.choose(rng).unwrap().clone();
            let mut att = att;
            let threshold = direct
                .sim
                .validators(att.source_chain)
                .unwrap()
                .set
                .threshold as usize;
            let EventProof::ThresholdSignatures(sigs) = &mut att.proof else {
                unreachable!()
            };
            let keep = rng.random_range(0..threshold);
            sigs.truncate(keep);
            // Repeating an accepted signer must not count twice.
            if keep > 0 && rng.random_bool(0.5) {
                let dup = sigs[0].clone();
                sigs.extend(std::iter::repeat_n(dup, threshold));
            }
            direct.verify(dest, &att)
        }
        CaseKind::HeaderNotRelayed => {
            let (dest, att) = header.valid.choose(rng).unwrap().clone();
            let EventProof::HeaderProof { height, .. } = att.proof else {
                unreachable!()
            };
            let mut world = header.sim.world(dest).unwrap().clone();
            world
                .registrar
                .relayed_headers
                .remove(&(att.source_chain, height));
            let headers = &header.sim.chain(dest).unwrap().headers;
            world
                .registrar
                .verify(header.sim.scheme(), headers, &att)
                .is_ok()
        }
        CaseKind::PayloadBitFlip => {
            let b = if rng.random_bool(0.5) { direct } else { header };
            let (dest, mut att) = b.valid.choose(rng).unwrap().clone();
            flip_bit(&mut att.event.payload, rng);
            b.verify(dest, &att)
        }
        CaseKind::SignatureBitFlip => {
            let (dest, mut att) = direct.valid.choose(rng).unwrap().clone();
            let threshold = direct
                .sim
                .validators(att.source_chain)
                .unwrap()
                .set
                .threshold as usize;
            let EventProof::ThresholdSignatures(sigs) = &mut att.proof else {
                unreachable!()
            };
            // Exactly a quorum, so one damaged signature drops below it.
            sigs.truncate(threshold);
            let i = rng.random_range(0..sigs.len());
            flip_bit(&mut sigs[i].1 .0, rng);
            direct.verify(dest, &att)
        }
        CaseKind::MerklePathBitFlip => {
            let (dest, mut att) = header.valid.choose(rng).unwrap().clone();
            let EventProof::HeaderProof { merkle, .. } = &mut att.proof else {
                unreachable!()
            };
            let n = merkle.siblings.len();
            let slot = rng.random_range(0..=n);
            if slot == n {
                flip_bit(&mut merkle.leaf_digest.0, rng);
            } else {
                flip_bit(&mut merkle.siblings[slot].1 .0, rng);
            }
            header.verify(dest, &att)
        }
    }
}

pub const CASE_KINDS: [CaseKind; 5] = [
    CaseKind::SubThreshold,
    CaseKind::HeaderNotRelayed,
    CaseKind::PayloadBitFlip,
    CaseKind::SignatureBitFlip,
    CaseKind::MerklePathBitFlip,
];

// ---- seeded fault runs ----

/// A random scenario with zero or more injected faults.
pub fn fault_config(seed: u64, rng: &mut impl RngCore) -> ScenarioConfig {
    let kind = *[ScenarioKind::Read, ScenarioKind::Write, ScenarioKind::Trade]
        .choose(rng)
        .unwrap();
    let mode = if rng.random_bool(0.5) {
        AttestationMode::Direct
    } else {
        AttestationMode::Header
    };
    let engine = if rng.random_bool(0.5) {
        EngineKind::Serial
    } else {
        EngineKind::Parallel
    };
    let mut cfg = ScenarioConfig::new(kind, mode, engine);
    cfg.seed = seed;
    cfg.timeout_periods = rng.random_range(2..=20);
    let segments: &[&str] = if kind == ScenarioKind::Trade {
        &["1", "1.1", "1.2", "1.3"]
    } else {
        &["1"]
    };
    if rng.random_bool(0.5) {
        let point = match rng.random_range(0..4) {
            0 => CrashPoint::BeforeStart,
            1 => CrashPoint::AfterStart,
            2 => CrashPoint::AfterSegments(rng.random_range(0..=segments.len() as u32)),
            _ => CrashPoint::AfterRoot,
        };
        cfg.faults.push(Fault::Crash(point));
    }
    if rng.random_bool(0.3) {
        let p = segments.choose(rng).unwrap();
        cfg.faults
            .push(Fault::FailSegmentAt(CallPath::parse(p).unwrap()));
    }
    if rng.random_bool(0.3) {
        cfg.faults.push(Fault::ByzantineSigners(1));
    }
    cfg
}

// ---- replay ----

/// Resubmits every recorded protocol transaction. Returns how many were
/// replayed, or the first one that was accepted or changed state.
pub fn replay_all(sim: &mut Simulation) -> Result<usize, String> {
    let recorded: Vec<_> = sim
        .successful_transactions()
        .into_iter()
        .filter(|(_, t)| {
            matches!(
                t.call.kind(),
                TxKind::Start | TxKind::Segment | TxKind::Root | TxKind::Signalling
            )
        })
        .map(|(h, t)| (h.chain, t.clone()))
        .collect();
    for (chain, tx) in &recorded {
        let before = sim.state_digest(*chain).unwrap();
        let h = sim.submit(*chain, tx.clone()).unwrap();
        sim.advance_period();
        if sim.receipt(h).unwrap().status == TxStatus::Success {
            return Err(format!(
                "replayed {} on {chain} was accepted",
                tx.call.kind()
            ));
        }
        if sim.state_digest(*chain).unwrap() != before {
            return Err(format!(
                "replayed {} on {chain} changed state",
                tx.call.kind()
            ));
        }
    }
    Ok(recorded.len())
}
