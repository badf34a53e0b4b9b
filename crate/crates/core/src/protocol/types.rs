use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use crate::chain_sim::{LogEvent, Topic};
use crate::codec::{CodecError, Decode, Decoder, Encode, Encoder};
use crate::crypto::Address;
use crate::ids::{ChainId, TxId, XtxRef};
use crate::storage::Decision;

/// One function call in the committed tree: where it runs and the exact
/// argument bytes it must be invoked with.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FunctionCallSpec {
    pub chain: ChainId,
    pub contract: Address,
    pub function: String,
    #[serde(with = "crate::chain_sim::hex_bytes")]
    pub args: Vec<u8>,
}

impl FunctionCallSpec {
    pub fn new(chain: ChainId, contract: Address, function: &str, args: Vec<u8>) -> Self {
        Self {
            chain,
            contract,
            function: function.to_string(),
            args,
        }
    }
}

impl fmt::Display for FunctionCallSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.function, self.chain)
    }
}

impl Encode for FunctionCallSpec {
    fn encode_to(&self, enc: &mut Encoder) {
        enc.value(&self.chain)
            .address(&self.contract)
            .str(&self.function)
            .bytes(&self.args);
    }
}

impl Decode for FunctionCallSpec {
    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(FunctionCallSpec {
            chain: ChainId::decode_from(dec)?,
            contract: dec.address()?,
            function: dec.string()?,
            args: dec.bytes()?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CallExecutionTree {
    pub node: FunctionCallSpec,
    pub children: Vec<CallExecutionTree>,
}

impl CallExecutionTree {
    pub fn leaf(node: FunctionCallSpec) -> Self {
        Self {
            node,
            children: Vec::new(),
        }
    }

    pub fn resolve(&self, path: &CallPath) -> Option<&CallExecutionTree> {
        path.0.iter().try_fold(self, |node, &i| {
            i.checked_sub(1)
                .and_then(|idx| node.children.get(idx as usize))
        })
    }

    /// Every node with its path, parents before children, children in call order.
    pub fn nodes(&self) -> Vec<(CallPath, &CallExecutionTree)> {
        fn walk<'a>(
            t: &'a CallExecutionTree,
            path: CallPath,
            out: &mut Vec<(CallPath, &'a CallExecutionTree)>,
        ) {
            out.push((path.clone(), t));
            for (i, c) in t.children.iter().enumerate() {
                walk(c, path.child(i as u32 + 1), out);
            }
        }
        let mut out = Vec::new();
        walk(self, CallPath::root(), &mut out);
        out
    }

    /// Children before parents, siblings in call order.
    pub fn post_order(&self) -> Vec<CallPath> {
        fn walk(t: &CallExecutionTree, path: CallPath, out: &mut Vec<CallPath>) {
            for (i, c) in t.children.iter().enumerate() {
                walk(c, path.child(i as u32 + 1), out);
            }
            out.push(path);
        }
        let mut out = Vec::new();
        walk(self, CallPath::root(), &mut out);
        out
    }

    /// Depth of the deepest node; a lone root has depth 0.
    pub fn depth(&self) -> usize {
        self.children
            .iter()
            .map(|c| 1 + c.depth())
            .max()
            .unwrap_or(0)
    }

    pub fn chains(&self) -> BTreeSet<ChainId> {
        self.nodes()
            .into_iter()
            .map(|(_, n)| n.node.chain)
            .collect()
    }
}

impl Encode for CallExecutionTree {
    fn encode_to(&self, enc: &mut Encoder) {
        enc.value(&self.node).list(&self.children);
    }
}

impl Decode for CallExecutionTree {
    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(CallExecutionTree {
            node: FunctionCallSpec::decode_from(dec)?,
            children: dec.list()?,
        })
    }
}

/// 1-based child indices from the root; empty is the root itself.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize)]
pub struct CallPath(pub Vec<u32>);

impl CallPath {
    pub fn root() -> Self {
        CallPath(Vec::new())
    }

    pub fn is_root(&self) -> bool {
        self.0.is_empty()
    }

    pub fn child(&self, index: u32) -> Self {
        let mut v = self.0.clone();
        v.push(index);
        CallPath(v)
    }

    pub fn parent(&self) -> Option<CallPath> {
        let (_, rest) = self.0.split_last()?;
        Some(CallPath(rest.to_vec()))
    }

    pub fn depth(&self) -> usize {
        self.0.len()
    }

    /// Parses `"root"`, `""` or dotted indices such as `"1.2"`.
    pub fn parse(s: &str) -> Option<CallPath> {
        let s = s.trim();
        if s.is_empty() || s == "root" {
            return Some(CallPath::root());
        }
        s.split(['.', ','])
            .map(|p| p.trim().parse::<u32>().ok().filter(|&i| i >= 1))
            .collect::<Option<Vec<_>>>()
            .map(CallPath)
    }
}

impl fmt::Display for CallPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("root");
        }
        let parts: Vec<String> = self.0.iter().map(|i| i.to_string()).collect();
        f.write_str(&parts.join("."))
    }
}

impl Encode for CallPath {
    fn encode_to(&self, enc: &mut Encoder) {
        enc.u32(self.0.len() as u32);
        for i in &self.0 {
            enc.u32(*i);
        }
    }
}

impl Decode for CallPath {
    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        let n = dec.u32()? as usize;
        if n * 4 > dec.remaining() {
            return Err(CodecError::LengthOverflow(n as u64));
        }
        (0..n)
            .map(|_| dec.u32())
            .collect::<Result<_, _>>()
            .map(CallPath)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StartEvent {
    pub tx_id: TxId,
    pub root_chain: ChainId,
    pub coordinator: Address,
    /// Absolute period after which anyone may abort.
    pub timeout: u64,
    pub tree: CallExecutionTree,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum SegmentOutcome {
    Success(#[serde(with = "crate::chain_sim::hex_bytes")] Vec<u8>),
    Error(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SegmentEvent {
    pub tx_id: TxId,
    pub root_chain: ChainId,
    pub path: CallPath,
    pub outcome: SegmentOutcome,
    pub locked_contracts: Vec<Address>,
}

impl SegmentEvent {
    pub fn is_error(&self) -> bool {
        matches!(self.outcome, SegmentOutcome::Error(_))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RootEvent {
    pub tx_id: TxId,
    pub root_chain: ChainId,
    pub decision: Decision,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SignallingEvent {
    pub tx_id: TxId,
    pub root_chain: ChainId,
    pub unlocked_contracts: Vec<Address>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum ProtocolEvent {
    Start(StartEvent),
    Segment(SegmentEvent),
    Root(RootEvent),
    Signalling(SignallingEvent),
}

impl ProtocolEvent {
    pub fn topic(&self) -> Topic {
        match self {
            ProtocolEvent::Start(_) => Topic::START,
            ProtocolEvent::Segment(_) => Topic::SEGMENT,
            ProtocolEvent::Root(_) => Topic::ROOT,
            ProtocolEvent::Signalling(_) => Topic::SIGNALLING,
        }
    }

    pub fn xtx(&self) -> XtxRef {
        let (tx_id, root_chain) = match self {
            ProtocolEvent::Start(e) => (e.tx_id, e.root_chain),
            ProtocolEvent::Segment(e) => (e.tx_id, e.root_chain),
            ProtocolEvent::Root(e) => (e.tx_id, e.root_chain),
            ProtocolEvent::Signalling(e) => (e.tx_id, e.root_chain),
        };
        XtxRef { root_chain, tx_id }
    }

    pub fn to_log(&self, emitter: Address) -> LogEvent {
        LogEvent {
            emitter,
            topic: self.topic(),
            payload: self.encode(),
        }
    }

    pub fn from_log(log: &LogEvent) -> Result<ProtocolEvent, CodecError> {
        let ev = ProtocolEvent::decode(&log.payload)?;
        if ev.topic() != log.topic {
            return Err(CodecError::InvalidTag {
                ty: "ProtocolEvent topic",
                tag: log.topic.0 as u8,
            });
        }
        Ok(ev)
    }

    pub fn as_start(&self) -> Option<&StartEvent> {
        match self {
            ProtocolEvent::Start(e) => Some(e),
            _ => None,
        }
    }

    pub fn as_segment(&self) -> Option<&SegmentEvent> {
        match self {
            ProtocolEvent::Segment(e) => Some(e),
            _ => None,
        }
    }

    pub fn as_root(&self) -> Option<&RootEvent> {
        match self {
            ProtocolEvent::Root(e) => Some(e),
            _ => None,
        }
    }
}

fn encode_decision(enc: &mut Encoder, d: Decision) {
    enc.u8(match d {
        Decision::Commit => 0,
        Decision::Abort => 1,
    });
}

fn decode_decision(dec: &mut Decoder<'_>) -> Result<Decision, CodecError> {
    match dec.u8()? {
        0 => Ok(Decision::Commit),
        1 => Ok(Decision::Abort),
        tag => Err(CodecError::InvalidTag {
            ty: "Decision",
            tag,
        }),
    }
}

impl Encode for ProtocolEvent {
    fn encode_to(&self, enc: &mut Encoder) {
        enc.u8(self.topic().0 as u8);
        match self {
            ProtocolEvent::Start(e) => {
                enc.value(&e.tx_id)
                    .value(&e.root_chain)
                    .address(&e.coordinator)
                    .u64(e.timeout)
                    .value(&e.tree);
            }
            ProtocolEvent::Segment(e) => {
                enc.value(&e.tx_id).value(&e.root_chain).value(&e.path);
                match &e.outcome {
                    SegmentOutcome::Success(ret) => enc.u8(0).bytes(ret),
                    SegmentOutcome::Error(reason) => enc.u8(1).str(reason),
                };
                enc.list(&e.locked_contracts);
            }
            ProtocolEvent::Root(e) => {
                enc.value(&e.tx_id).value(&e.root_chain);
                encode_decision(enc, e.decision);
            }
            ProtocolEvent::Signalling(e) => {
                enc.value(&e.tx_id)
                    .value(&e.root_chain)
                    .list(&e.unlocked_contracts);
            }
        }
    }
}

impl Decode for ProtocolEvent {
    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        let tag = dec.u8()?;
        let tx_id = TxId::decode_from(dec)?;
        let root_chain = ChainId::decode_from(dec)?;
        Ok(match tag {
            1 => ProtocolEvent::Start(StartEvent {
                tx_id,
                root_chain,
                coordinator: dec.address()?,
                timeout: dec.u64()?,
                tree: CallExecutionTree::decode_from(dec)?,
            }),
            2 => {
                let path = CallPath::decode_from(dec)?;
                let outcome = match dec.u8()? {
                    0 => SegmentOutcome::Success(dec.bytes()?),
                    1 => SegmentOutcome::Error(dec.string()?),
                    tag => {
                        return Err(CodecError::InvalidTag {
                            ty: "SegmentOutcome",
                            tag,
                        })
                    }
                };
                ProtocolEvent::Segment(SegmentEvent {
                    tx_id,
                    root_chain,
                    path,
                    outcome,
                    locked_contracts: dec.list()?,
                })
            }
            3 => ProtocolEvent::Root(RootEvent {
                tx_id,
                root_chain,
                decision: decode_decision(dec)?,
            }),
            4 => ProtocolEvent::Signalling(SignallingEvent {
                tx_id,
                root_chain,
                unlocked_contracts: dec.list()?,
            }),
            tag => {
                return Err(CodecError::InvalidTag {
                    ty: "ProtocolEvent",
                    tag,
                })
            }
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Role {
    Start,
    Segment,
    Root,
    Signalling,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize)]
pub enum RootDecision {
    #[default]
    Pending,
    Commit,
    Abort,
}

impl From<Decision> for RootDecision {
    fn from(d: Decision) -> Self {
        match d {
            Decision::Commit => RootDecision::Commit,
            Decision::Abort => RootDecision::Abort,
        }
    }
}

/// Per-transaction bookkeeping held by one chain's control contract.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CrosschainTxRecord {
    pub xtx: XtxRef,
    pub phase_guard: BTreeSet<(Role, CallPath)>,
    pub locked_here: BTreeSet<Address>,
    pub root_decision: RootDecision,
}

impl CrosschainTxRecord {
    pub fn new(xtx: XtxRef) -> Self {
        Self {
            xtx,
            phase_guard: BTreeSet::new(),
            locked_here: BTreeSet::new(),
            root_decision: RootDecision::Pending,
        }
    }

    pub fn consumed(&self, role: Role, path: &CallPath) -> bool {
        self.phase_guard.contains(&(role, path.clone()))
    }
}

impl Encode for CrosschainTxRecord {
    fn encode_to(&self, enc: &mut Encoder) {
        enc.value(&self.xtx);
        enc.u32(self.phase_guard.len() as u32);
        for (role, path) in &self.phase_guard {
            enc.u8(*role as u8).value(path);
        }
        enc.u32(self.locked_here.len() as u32);
        for a in &self.locked_here {
            enc.address(a);
        }
        enc.u8(self.root_decision as u8);
    }
}

/// State of one chain's crosschain control contract.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ControlState {
    pub records: BTreeMap<XtxRef, CrosschainTxRecord>,
}

impl Encode for ControlState {
    fn encode_to(&self, enc: &mut Encoder) {
        let records: Vec<&CrosschainTxRecord> = self.records.values().collect();
        enc.u32(records.len() as u32);
        for r in records {
            r.encode_to(enc);
        }
    }
}
