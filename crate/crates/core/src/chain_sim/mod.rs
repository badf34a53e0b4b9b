//! Lockstep simulation of several Ethereum-like chains.
//!
//! Every call to [`Simulation::advance_period`] produces exactly one block on
//! every chain, empty or not, timestamped with the new period index. Blocks are
//! final as soon as they exist.

mod block;
mod world;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

pub(crate) use block::hex_bytes;
pub use block::{BlockHeader, EventLocation, LogEvent, Receipt, Topic, TxStatus};
pub use world::{BlockEnv, Contract, Transaction, TxCall, TxError, TxKind, World};

use crate::attestation::{
    event_message, header_message, sign_event, AttestationError, AttestationMode, AttestedEvent,
    EventProof, KeyedTagScheme, RegistrarState, SharedScheme, Signature, SignatureScheme,
    SignerSet,
};
use crate::codec::Encode;
use crate::crypto::{Address, Digest};
use crate::ids::{ChainId, SignerId};
use crate::merkle::{build_proof, leaf_digest, root_of, MerkleProof};
use crate::protocol::{BusinessLogic, ProtocolEvent};
use crate::storage::LockableContractState;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("unknown chain {0}")]
    UnknownChain(ChainId),
    #[error("duplicate chain id {0}")]
    DuplicateChain(ChainId),
    #[error("unknown contract {0} on {1}")]
    UnknownContract(Address, ChainId),
    #[error("unknown function {function} on contract {contract}")]
    UnknownFunction { contract: String, function: String },
    #[error("contract {0} already deployed")]
    Redeployment(String),
    #[error("no block at height {height} on {chain}")]
    BlockOutOfRange { chain: ChainId, height: u64 },
    #[error("no receipt {index} in block {height} on {chain}")]
    ReceiptOutOfRange {
        chain: ChainId,
        height: u64,
        index: u32,
    },
    #[error("no event {index} in receipt")]
    EventOutOfRange { index: u32 },
    #[error(transparent)]
    Attestation(#[from] AttestationError),
}

/// Static description of one chain.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ChainSpec {
    pub id: ChainId,
    pub name: String,
    pub signers: u32,
    pub threshold: u32,
    /// How many of this chain's signers misbehave.
    pub byzantine: u32,
}

impl ChainSpec {
    pub fn new(id: u64, name: &str) -> Self {
        Self {
            id: ChainId(id),
            name: name.to_string(),
            signers: 3,
            threshold: 2,
            byzantine: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BlockBody {
    pub transactions: Vec<Transaction>,
    pub receipts: Vec<Receipt>,
}

#[derive(Clone, Debug)]
pub struct ChainState {
    pub id: ChainId,
    pub name: String,
    pub headers: Vec<BlockHeader>,
    pub bodies: Vec<BlockBody>,
    pub pending: Vec<Transaction>,
    pub world: World,
    pub period_clock: u64,
}

impl ChainState {
    pub fn height(&self) -> u64 {
        self.headers.len() as u64 - 1
    }

    pub fn state_digest(&self) -> Digest {
        self.world.digest()
    }
}

/// Where a submitted transaction will land.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct TxHandle {
    pub chain: ChainId,
    pub height: u64,
    pub index: u32,
}

/// Signer set of one chain plus the members that misbehave.
#[derive(Clone, Debug)]
pub struct Validators {
    pub set: SignerSet,
    pub faulty: BTreeSet<SignerId>,
}

impl Validators {
    /// Signatures as the validators would actually produce them: honest
    /// members sign `message`; faulty members at even positions stay silent
    /// and the rest sign something else.
    fn signatures(
        &self,
        scheme: &dyn SignatureScheme,
        message: &[u8],
    ) -> Vec<(SignerId, Signature)> {
        let mut out = Vec::new();
        for (i, s) in self.set.members.iter().enumerate() {
            if !self.faulty.contains(s) {
                out.push((*s, scheme.sign(*s, message)));
            } else if i % 2 == 1 {
                out.push((*s, scheme.sign(*s, b"garbage")));
            }
        }
        out
    }
}

pub fn control_address(chain: ChainId) -> Address {
    Address::derive(&format!("control/{}", chain.0))
}

pub fn registrar_address(chain: ChainId) -> Address {
    Address::derive(&format!("registrar/{}", chain.0))
}

pub fn contract_address(chain: ChainId, name: &str) -> Address {
    Address::derive(&format!("{}/{}", chain.0, name))
}

#[derive(Clone)]
pub struct Simulation {
    chains: BTreeMap<ChainId, ChainState>,
    period: u64,
    mode: AttestationMode,
    scheme: SharedScheme,
    validators: BTreeMap<ChainId, Validators>,
}

impl Simulation {
    pub fn new(specs: &[ChainSpec], mode: AttestationMode, seed: u64) -> Result<Self, SimError> {
        let scheme: SharedScheme = Arc::new(KeyedTagScheme::new(seed));
        let mut validators = BTreeMap::new();
        for spec in specs {
            let members: Vec<SignerId> = (0..spec.signers)
                .map(|i| SignerId(spec.id.0 as u32 * 1000 + i))
                .collect();
            let set = SignerSet {
                chain: spec.id,
                members: members.clone(),
                threshold: spec.threshold,
            };
            set.validate()?;
            let faulty = members
                .iter()
                .take(spec.byzantine as usize)
                .copied()
                .collect();
            if validators
                .insert(spec.id, Validators { set, faulty })
                .is_some()
            {
                return Err(SimError::DuplicateChain(spec.id));
            }
        }
        let mut chains = BTreeMap::new();
        for spec in specs {
            let mut registrar = RegistrarState::new(spec.id, mode);
            for (id, v) in &validators {
                registrar.register_signer_set(*id, v.set.clone())?;
                registrar.register_control_contract(*id, control_address(*id))?;
            }
            let world = World::new(
                spec.id,
                registrar,
                control_address(spec.id),
                registrar_address(spec.id),
            );
            let genesis = BlockHeader {
                chain: spec.id,
                height: 0,
                timestamp: 0,
                receipt_root: Digest::ZERO,
                parent_digest: Digest::ZERO,
            };
            chains.insert(
                spec.id,
                ChainState {
                    id: spec.id,
                    name: spec.name.clone(),
                    headers: vec![genesis],
                    bodies: vec![BlockBody::default()],
                    pending: Vec::new(),
                    world,
                    period_clock: 0,
                },
            );
        }
        Ok(Self {
            chains,
            period: 0,
            mode,
            scheme,
            validators,
        })
    }

    pub fn mode(&self) -> AttestationMode {
        self.mode
    }

    pub fn period(&self) -> u64 {
        self.period
    }

    /// Timestamp of the block the next submission will land in.
    pub fn next_timestamp(&self) -> u64 {
        self.period + 1
    }

    pub fn scheme(&self) -> &dyn SignatureScheme {
        self.scheme.as_ref()
    }

    pub fn chain_ids(&self) -> Vec<ChainId> {
        self.chains.keys().copied().collect()
    }

    pub fn chain(&self, id: ChainId) -> Result<&ChainState, SimError> {
        self.chains.get(&id).ok_or(SimError::UnknownChain(id))
    }

    fn chain_mut(&mut self, id: ChainId) -> Result<&mut ChainState, SimError> {
        self.chains.get_mut(&id).ok_or(SimError::UnknownChain(id))
    }

    pub fn validators(&self, id: ChainId) -> Result<&Validators, SimError> {
        self.validators.get(&id).ok_or(SimError::UnknownChain(id))
    }

    pub fn world(&self, id: ChainId) -> Result<&World, SimError> {
        Ok(&self.chain(id)?.world)
    }

    pub fn worlds(&self) -> BTreeMap<ChainId, World> {
        self.chains
            .iter()
            .map(|(id, c)| (*id, c.world.clone()))
            .collect()
    }

    pub fn deploy(
        &mut self,
        chain: ChainId,
        name: &str,
        logic: Arc<dyn BusinessLogic>,
        storage: LockableContractState,
    ) -> Result<Address, SimError> {
        let address = contract_address(chain, name);
        let world = &mut self.chain_mut(chain)?.world;
        if world.contracts.contains_key(&address) {
            return Err(SimError::Redeployment(name.to_string()));
        }
        world.contracts.insert(
            address,
            Contract {
                name: name.to_string(),
                logic,
                storage,
            },
        );
        Ok(address)
    }

    pub fn set_restrict_to_coordinator(&mut self, on: bool) {
        for c in self.chains.values_mut() {
            c.world.restrict_to_coordinator = on;
        }
    }

    /// Makes every crosschain execution of `function` on `contract` revert.
    pub fn force_revert(
        &mut self,
        chain: ChainId,
        contract: Address,
        function: &str,
    ) -> Result<(), SimError> {
        let world = &mut self.chain_mut(chain)?.world;
        world
            .forced_reverts
            .insert((contract, function.to_string()));
        Ok(())
    }

    pub fn submit(&mut self, chain: ChainId, tx: Transaction) -> Result<TxHandle, SimError> {
        let state = self.chain_mut(chain)?;
        let world = &state.world;
        if let TxCall::Invoke { function, .. } = &tx.call {
            let contract = world
                .contracts
                .get(&tx.to)
                .ok_or(SimError::UnknownContract(tx.to, chain))?;
            if !contract.logic.functions().contains(&function.as_str()) {
                return Err(SimError::UnknownFunction {
                    contract: contract.name.clone(),
                    function: function.clone(),
                });
            }
        } else if tx.to != world.control_address && tx.to != world.registrar_address {
            return Err(SimError::UnknownContract(tx.to, chain));
        }
        let handle = TxHandle {
            chain,
            height: state.headers.len() as u64,
            index: state.pending.len() as u32,
        };
        state.pending.push(tx);
        Ok(handle)
    }

    pub fn advance_period(&mut self) -> Vec<(ChainId, BlockHeader)> {
        self.period += 1;
        let timestamp = self.period;
        let scheme = Arc::clone(&self.scheme);
        let mut produced = Vec::new();
        for (id, chain) in self.chains.iter_mut() {
            let transactions = std::mem::take(&mut chain.pending);
            let mut receipts = Vec::with_capacity(transactions.len());
            for tx in &transactions {
                let env = BlockEnv {
                    timestamp,
                    scheme: scheme.as_ref(),
                    headers: &chain.headers,
                };
                let (status, events) = match chain.world.apply(&env, tx) {
                    Ok(events) => (TxStatus::Success, events),
                    Err(e) => (TxStatus::Failure(e.to_string()), Vec::new()),
                };
                receipts.push(Receipt {
                    tx_digest: tx.digest(),
                    status,
                    events,
                });
            }
            let encoded: Vec<Vec<u8>> = receipts.iter().map(|r| r.encode()).collect();
            let parent = chain.headers.last().expect("genesis exists");
            let header = BlockHeader {
                chain: *id,
                height: parent.height + 1,
                timestamp,
                receipt_root: root_of(&encoded),
                parent_digest: parent.digest(),
            };
            chain.headers.push(header.clone());
            chain.bodies.push(BlockBody {
                transactions,
                receipts,
            });
            chain.period_clock = timestamp;
            produced.push((*id, header));
        }
        produced
    }

    pub fn receipt(&self, handle: TxHandle) -> Option<&Receipt> {
        self.chains
            .get(&handle.chain)?
            .bodies
            .get(handle.height as usize)?
            .receipts
            .get(handle.index as usize)
    }

    pub fn transaction(&self, handle: TxHandle) -> Option<&Transaction> {
        self.chains
            .get(&handle.chain)?
            .bodies
            .get(handle.height as usize)?
            .transactions
            .get(handle.index as usize)
    }

    /// Every included transaction that succeeded, in chain then block order.
    pub fn successful_transactions(&self) -> Vec<(TxHandle, &Transaction)> {
        let mut out = Vec::new();
        for (chain, state) in &self.chains {
            for (height, body) in state.bodies.iter().enumerate() {
                for (index, (tx, r)) in body.transactions.iter().zip(&body.receipts).enumerate() {
                    if r.status == TxStatus::Success {
                        let handle = TxHandle {
                            chain: *chain,
                            height: height as u64,
                            index: index as u32,
                        };
                        out.push((handle, tx));
                    }
                }
            }
        }
        out
    }

    fn block(&self, chain: ChainId, height: u64) -> Result<(&BlockHeader, &BlockBody), SimError> {
        let state = self.chain(chain)?;
        match (
            state.headers.get(height as usize),
            state.bodies.get(height as usize),
        ) {
            (Some(h), Some(b)) => Ok((h, b)),
            _ => Err(SimError::BlockOutOfRange { chain, height }),
        }
    }

    pub fn header(&self, chain: ChainId, height: u64) -> Result<&BlockHeader, SimError> {
        Ok(self.block(chain, height)?.0)
    }

    pub fn build_receipt_proof(
        &self,
        chain: ChainId,
        height: u64,
        index: u32,
    ) -> Result<MerkleProof, SimError> {
        let (_, body) = self.block(chain, height)?;
        let leaves: Vec<Digest> = body
            .receipts
            .iter()
            .map(|r| leaf_digest(&r.encode()))
            .collect();
        build_proof(&leaves, index as usize).ok_or(SimError::ReceiptOutOfRange {
            chain,
            height,
            index,
        })
    }

    pub fn log_event(&self, loc: EventLocation) -> Result<&LogEvent, SimError> {
        let (_, body) = self.block(loc.chain, loc.height)?;
        let receipt =
            body.receipts
                .get(loc.receipt_index as usize)
                .ok_or(SimError::ReceiptOutOfRange {
                    chain: loc.chain,
                    height: loc.height,
                    index: loc.receipt_index,
                })?;
        receipt
            .events
            .get(loc.event_index as usize)
            .ok_or(SimError::EventOutOfRange {
                index: loc.event_index,
            })
    }

    /// Attestation of a finalized event in the configured mode, produced by the
    /// source chain's validators (or, in header mode, by proof construction).
    pub fn attest(&self, loc: EventLocation) -> Result<AttestedEvent, SimError> {
        let event = self.log_event(loc)?.clone();
        match self.mode {
            AttestationMode::Direct => {
                let v = self.validators(loc.chain)?;
                let msg = event_message(loc.chain, &event);
                let mut att = sign_event(self.scheme(), event, loc.chain, &[]);
                att.proof = EventProof::ThresholdSignatures(v.signatures(self.scheme(), &msg));
                Ok(att)
            }
            AttestationMode::Header => {
                let (_, body) = self.block(loc.chain, loc.height)?;
                let receipt = body.receipts[loc.receipt_index as usize].clone();
                Ok(AttestedEvent {
                    event,
                    source_chain: loc.chain,
                    proof: EventProof::HeaderProof {
                        height: loc.height,
                        receipt_index: loc.receipt_index,
                        event_index: loc.event_index,
                        receipt,
                        merkle: self.build_receipt_proof(
                            loc.chain,
                            loc.height,
                            loc.receipt_index,
                        )?,
                    },
                })
            }
        }
    }

    pub fn header_signatures(
        &self,
        chain: ChainId,
        height: u64,
    ) -> Result<Vec<(SignerId, Signature)>, SimError> {
        let header = self.header(chain, height)?;
        Ok(self
            .validators(chain)?
            .signatures(self.scheme(), &header_message(header)))
    }

    /// A transaction storing `source`'s header at `height` in `dest`'s registrar.
    pub fn relay_tx(
        &self,
        sender: Address,
        dest: ChainId,
        source: ChainId,
        height: u64,
    ) -> Result<Transaction, SimError> {
        self.chain(dest)?;
        Ok(Transaction {
            sender,
            to: registrar_address(dest),
            call: TxCall::RelayHeader {
                header: self.header(source, height)?.clone(),
                signatures: self.header_signatures(source, height)?,
            },
        })
    }

    /// Whether an event from `source` at `height` can be proven on `dest`
    /// without a further relay.
    pub fn header_available(&self, dest: ChainId, source: ChainId, height: u64) -> bool {
        self.mode == AttestationMode::Direct
            || dest == source
            || self
                .chains
                .get(&dest)
                .is_some_and(|c| c.world.registrar.has_header(source, height))
    }

    /// Every protocol event emitted by `chain`'s control contract, in order.
    pub fn protocol_events(&self, chain: ChainId) -> Vec<(EventLocation, ProtocolEvent)> {
        let Some(state) = self.chains.get(&chain) else {
            return Vec::new();
        };
        let control = state.world.control_address;
        let mut out = Vec::new();
        for (height, body) in state.bodies.iter().enumerate() {
            for (ri, receipt) in body.receipts.iter().enumerate() {
                if !receipt.status.is_success() {
                    continue;
                }
                for (ei, ev) in receipt.events.iter().enumerate() {
                    if ev.emitter != control || !ev.topic.is_protocol() {
                        continue;
                    }
                    if let Ok(p) = ProtocolEvent::from_log(ev) {
                        let loc = EventLocation {
                            chain,
                            height: height as u64,
                            receipt_index: ri as u32,
                            event_index: ei as u32,
                        };
                        out.push((loc, p));
                    }
                }
            }
        }
        out
    }

    pub fn state_digest(&self, chain: ChainId) -> Result<Digest, SimError> {
        Ok(self.chain(chain)?.state_digest())
    }

    /// Digest over every chain's world state, in chain order.
    pub fn global_digest(&self) -> Digest {
        let parts: Vec<[u8; 32]> = self.chains.values().map(|c| c.state_digest().0).collect();
        let refs: Vec<&[u8]> = parts.iter().map(|p| p.as_slice()).collect();
        crate::crypto::hash_parts(&refs)
    }

    /// Every locked contract across all chains.
    pub fn lock_residue(&self) -> Vec<(ChainId, Address)> {
        self.chains
            .iter()
            .flat_map(|(id, c)| {
                c.world
                    .locked_contracts()
                    .into_iter()
                    .map(move |a| (*id, a))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{decode_u64, encode_u64, ArgReader};
    use crate::merkle::Side;
    use crate::protocol::{AppError, ContractContext};

    #[derive(Debug)]
    struct Counter;

    impl BusinessLogic for Counter {
        fn functions(&self) -> &'static [&'static str] {
            &["add"]
        }

        fn call(
            &self,
            ctx: &mut dyn ContractContext,
            _function: &str,
            args: &[u8],
        ) -> Result<Vec<u8>, AppError> {
            let by = ArgReader::parse(args)?.u64()?;
            let v = decode_u64(&ctx.read(b"n")?)? + by;
            ctx.write(b"n", encode_u64(v))?;
            Ok(encode_u64(v))
        }
    }

    fn sim() -> (Simulation, Address) {
        let mut sim = Simulation::new(
            &[ChainSpec::new(1, "a"), ChainSpec::new(2, "b")],
            AttestationMode::Header,
            7,
        )
        .unwrap();
        let addr = sim
            .deploy(
                ChainId(2),
                "counter",
                Arc::new(Counter),
                LockableContractState::new(),
            )
            .unwrap();
        (sim, addr)
    }

    fn add(to: Address, by: u64) -> Transaction {
        Transaction {
            sender: Address::derive("user"),
            to,
            call: TxCall::Invoke {
                function: "add".into(),
                args: crate::codec::Args::new().u64(by).encode(),
            },
        }
    }

    #[test]
    fn submission_lands_in_next_block_in_order() {
        let (mut sim, addr) = sim();
        let h1 = sim.submit(ChainId(2), add(addr, 1)).unwrap();
        let h2 = sim.submit(ChainId(2), add(addr, 2)).unwrap();
        assert_eq!((h1.height, h1.index, h2.index), (1, 0, 1));
        sim.advance_period();
        assert!(sim.receipt(h1).unwrap().status.is_success());
        assert!(sim.receipt(h2).unwrap().status.is_success());
        let storage = &sim.world(ChainId(2)).unwrap().contracts[&addr].storage;
        assert_eq!(decode_u64(&storage.peek(b"n")).unwrap(), 3);
    }

    #[test]
    fn unknown_targets_rejected() {
        let (mut sim, addr) = sim();
        assert_eq!(
            sim.submit(ChainId(9), add(addr, 1)),
            Err(SimError::UnknownChain(ChainId(9)))
        );
        let ghost = Address::derive("ghost");
        assert_eq!(
            sim.submit(ChainId(2), add(ghost, 1)),
            Err(SimError::UnknownContract(ghost, ChainId(2)))
        );
        let mut bad = add(addr, 1);
        bad.call = TxCall::Invoke {
            function: "nope".into(),
            args: vec![],
        };
        assert!(matches!(
            sim.submit(ChainId(2), bad),
            Err(SimError::UnknownFunction { .. })
        ));
    }

    #[test]
    fn lockstep_and_empty_blocks() {
        let (mut sim, _) = sim();
        for _ in 0..3 {
            let produced = sim.advance_period();
            assert_eq!(produced.len(), 2);
        }
        for id in sim.chain_ids() {
            let c = sim.chain(id).unwrap();
            assert_eq!(c.period_clock, 3);
            assert_eq!(c.height(), 3);
            assert_eq!(c.headers[3].timestamp, 3);
            assert_eq!(c.headers[3].receipt_root, Digest::ZERO);
        }
    }

    #[test]
    fn headers_are_hash_linked() {
        let (mut sim, addr) = sim();
        sim.submit(ChainId(2), add(addr, 1)).unwrap();
        sim.advance_period();
        sim.advance_period();
        let c = sim.chain(ChainId(2)).unwrap();
        for w in c.headers.windows(2) {
            assert_eq!(w[1].parent_digest, w[0].digest());
            assert_eq!(w[1].height, w[0].height + 1);
        }
    }

    #[test]
    fn receipt_proofs_verify() {
        let (mut sim, addr) = sim();
        for i in 0..4 {
            sim.submit(ChainId(2), add(addr, i)).unwrap();
        }
        sim.advance_period();
        let header = sim.header(ChainId(2), 1).unwrap().clone();
        for i in 0..4 {
            let p = sim.build_receipt_proof(ChainId(2), 1, i).unwrap();
            assert_eq!(p.siblings.len(), 2);
            assert!(p.verify(&header.receipt_root));
        }
        assert!(sim.build_receipt_proof(ChainId(2), 1, 4).is_err());
        assert!(sim.build_receipt_proof(ChainId(2), 5, 0).is_err());
    }

    #[test]
    fn single_receipt_proof_is_empty_path() {
        let (mut sim, addr) = sim();
        sim.submit(ChainId(2), add(addr, 1)).unwrap();
        sim.advance_period();
        let p = sim.build_receipt_proof(ChainId(2), 1, 0).unwrap();
        assert!(p.siblings.is_empty());
        assert_eq!(
            p.leaf_digest,
            sim.header(ChainId(2), 1).unwrap().receipt_root
        );
        let _ = Side::Left;
    }

    #[test]
    fn relay_is_stored_on_destination() {
        let (mut sim, _) = sim();
        sim.advance_period();
        assert!(!sim.header_available(ChainId(1), ChainId(2), 1));
        let tx = sim
            .relay_tx(Address::derive("relayer"), ChainId(1), ChainId(2), 1)
            .unwrap();
        let h = sim.submit(ChainId(1), tx).unwrap();
        sim.advance_period();
        assert!(sim.receipt(h).unwrap().status.is_success());
        assert!(sim.header_available(ChainId(1), ChainId(2), 1));
    }

    #[test]
    fn same_trace_same_headers() {
        let run = || {
            let (mut sim, addr) = sim();
            sim.submit(ChainId(2), add(addr, 5)).unwrap();
            sim.advance_period();
            sim.advance_period();
            sim.chain(ChainId(2)).unwrap().headers.clone()
        };
        assert_eq!(run(), run());
    }
}
