use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::attestation::{
    AttestationError, AttestedEvent, RegistrarState, Signature, SignatureScheme,
};
use crate::codec::{Encode, Encoder};
use crate::crypto::Address;
use crate::ids::{ChainId, SignerId, TxId};
use crate::protocol::control::{self, ControlError};
use crate::protocol::{
    AppError, BusinessLogic, CallExecutionTree, CallPath, ControlState, PlainCtx,
};
use crate::storage::LockableContractState;

use super::{BlockHeader, LogEvent};

#[derive(Clone)]
pub struct Contract {
    pub name: String,
    pub logic: Arc<dyn BusinessLogic>,
    pub storage: LockableContractState,
}

impl fmt::Debug for Contract {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Contract")
            .field("name", &self.name)
            .field("storage", &self.storage)
            .finish()
    }
}

/// Everything a chain's transactions can touch.
#[derive(Clone, Debug)]
pub struct World {
    pub chain: ChainId,
    pub control_address: Address,
    pub registrar_address: Address,
    pub contracts: BTreeMap<Address, Contract>,
    pub control: ControlState,
    pub registrar: RegistrarState,
    /// Injected faults: crosschain calls of these functions revert.
    pub forced_reverts: BTreeSet<(Address, String)>,
    pub restrict_to_coordinator: bool,
}

impl Encode for World {
    fn encode_to(&self, enc: &mut Encoder) {
        enc.value(&self.chain)
            .address(&self.control_address)
            .address(&self.registrar_address);
        enc.u32(self.contracts.len() as u32);
        for (addr, c) in &self.contracts {
            enc.address(addr).str(&c.name).value(&c.storage);
        }
        enc.value(&self.control).value(&self.registrar);
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum TxCall {
    Start {
        tx_id: TxId,
        timeout_periods: u64,
        tree: CallExecutionTree,
    },
    Segment {
        start: AttestedEvent,
        path: CallPath,
        children: Vec<AttestedEvent>,
    },
    Root {
        start: AttestedEvent,
        children: Vec<AttestedEvent>,
    },
    Signalling {
        root: AttestedEvent,
        segments: Vec<AttestedEvent>,
    },
    RelayHeader {
        header: BlockHeader,
        signatures: Vec<(SignerId, Signature)>,
    },
    Invoke {
        function: String,
        #[serde(with = "super::hex_bytes")]
        args: Vec<u8>,
    },
}

impl TxCall {
    pub fn kind(&self) -> TxKind {
        match self {
            TxCall::Start { .. } => TxKind::Start,
            TxCall::Segment { .. } => TxKind::Segment,
            TxCall::Root { .. } => TxKind::Root,
            TxCall::Signalling { .. } => TxKind::Signalling,
            TxCall::RelayHeader { .. } => TxKind::Relay,
            TxCall::Invoke { .. } => TxKind::Invoke,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TxKind {
    Start,
    Segment,
    Root,
    Signalling,
    Relay,
    Invoke,
}

impl fmt::Display for TxKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TxKind::Start => "start",
            TxKind::Segment => "segment",
            TxKind::Root => "root",
            TxKind::Signalling => "signalling",
            TxKind::Relay => "relay",
            TxKind::Invoke => "invoke",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Transaction {
    pub sender: Address,
    pub to: Address,
    pub call: TxCall,
}

impl Encode for TxCall {
    fn encode_to(&self, enc: &mut Encoder) {
        match self {
            TxCall::Start {
                tx_id,
                timeout_periods,
                tree,
            } => {
                enc.u8(0).value(tx_id).u64(*timeout_periods).value(tree);
            }
            TxCall::Segment {
                start,
                path,
                children,
            } => {
                enc.u8(1).value(start).value(path).list(children);
            }
            TxCall::Root { start, children } => {
                enc.u8(2).value(start).list(children);
            }
            TxCall::Signalling { root, segments } => {
                enc.u8(3).value(root).list(segments);
            }
            TxCall::RelayHeader { header, signatures } => {
                enc.u8(4).value(header).list(signatures);
            }
            TxCall::Invoke { function, args } => {
                enc.u8(5).str(function).bytes(args);
            }
        }
    }
}

impl Encode for Transaction {
    fn encode_to(&self, enc: &mut Encoder) {
        enc.address(&self.sender)
            .address(&self.to)
            .value(&self.call);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TxError {
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Attestation(#[from] AttestationError),
    #[error(transparent)]
    App(#[from] AppError),
    #[error("{0} is not the target for this kind of call")]
    WrongTarget(Address),
}

/// Block-wide inputs to transaction execution.
pub struct BlockEnv<'a> {
    pub timestamp: u64,
    pub scheme: &'a dyn SignatureScheme,
    /// This chain's own headers, for proofs of its own events.
    pub headers: &'a [BlockHeader],
}

impl World {
    pub fn new(
        chain: ChainId,
        registrar: RegistrarState,
        control_address: Address,
        registrar_address: Address,
    ) -> Self {
        Self {
            chain,
            control_address,
            registrar_address,
            contracts: BTreeMap::new(),
            control: ControlState::default(),
            registrar,
            forced_reverts: BTreeSet::new(),
            restrict_to_coordinator: true,
        }
    }

    /// Executes a transaction atomically: on error nothing changes.
    pub fn apply(
        &mut self,
        env: &BlockEnv<'_>,
        tx: &Transaction,
    ) -> Result<Vec<LogEvent>, TxError> {
        let mut scratch = self.clone();
        let events = scratch.execute(env, tx)?;
        *self = scratch;
        Ok(events)
    }

    fn execute(&mut self, env: &BlockEnv<'_>, tx: &Transaction) -> Result<Vec<LogEvent>, TxError> {
        let expected_target = match tx.call {
            TxCall::RelayHeader { .. } => self.registrar_address,
            TxCall::Invoke { .. } => tx.to,
            _ => self.control_address,
        };
        if tx.to != expected_target {
            return Err(TxError::WrongTarget(tx.to));
        }
        let event = match &tx.call {
            TxCall::Start {
                tx_id,
                timeout_periods,
                tree,
            } => control::start(self, env, tx.sender, *tx_id, *timeout_periods, tree)?,
            TxCall::Segment {
                start,
                path,
                children,
            } => control::segment(self, env, tx.sender, start, path, children)?,
            TxCall::Root { start, children } => {
                control::root(self, env, tx.sender, start, children)?
            }
            TxCall::Signalling { root, segments } => {
                control::signalling(self, env, root, segments)?
            }
            TxCall::RelayHeader { header, signatures } => {
                self.registrar
                    .relay_header(env.scheme, header.clone(), signatures)?;
                return Ok(Vec::new());
            }
            TxCall::Invoke { function, args } => {
                self.invoke(env, tx.to, function, args)?;
                return Ok(Vec::new());
            }
        };
        Ok(vec![event.to_log(self.control_address)])
    }

    fn invoke(
        &mut self,
        env: &BlockEnv<'_>,
        to: Address,
        function: &str,
        args: &[u8],
    ) -> Result<Vec<u8>, AppError> {
        let chain = self.chain;
        let contract = self
            .contracts
            .get_mut(&to)
            .ok_or(AppError::UnknownContract(to, chain))?;
        let logic = Arc::clone(&contract.logic);
        let mut ctx = PlainCtx {
            storage: &mut contract.storage,
            this: to,
            chain,
            timestamp: env.timestamp,
        };
        logic.call(&mut ctx, function, args)
    }

    /// Contracts currently locked, with their owner.
    pub fn locked_contracts(&self) -> Vec<Address> {
        self.contracts
            .iter()
            .filter(|(_, c)| c.storage.is_locked())
            .map(|(a, _)| *a)
            .collect()
    }
}
