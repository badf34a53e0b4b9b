//! Making events from one chain trustworthy on another.
//!
//! Two mechanisms are supported and a simulation runs with exactly one of
//! them:
//!
//! * **Direct signing**: a threshold of the source chain's validators sign the
//!   `(source chain, event)` pair.
//! * **Block header transfer**: relayers sign whole block headers, which are
//!   stored in the destination registrar by an ordinary transaction; events are
//!   then proven by a Merkle inclusion proof against the stored receipt root.
//!
//! The registrar on every chain holds the signer set and control-contract
//! address of every participating chain.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use hmac::{Hmac, KeyInit, Mac};
use serde::{Deserialize, Serialize};
use sha2::Sha256;
use thiserror::Error;

use crate::chain_sim::{BlockHeader, LogEvent, Receipt};
use crate::codec::{CodecError, Encode, Encoder};
use crate::crypto::{hash_parts, Address, Digest};
use crate::ids::{ChainId, SignerId};
use crate::merkle::{leaf_digest, MerkleProof, Side};
use crate::protocol::ProtocolEvent;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttestationMode {
    #[default]
    Direct,
    Header,
}

impl fmt::Display for AttestationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttestationMode::Direct => "direct",
            AttestationMode::Header => "header",
        })
    }
}

impl std::str::FromStr for AttestationMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "direct" => Ok(AttestationMode::Direct),
            "header" => Ok(AttestationMode::Header),
            other => Err(format!(
                "unknown attestation mode {other:?} (expected direct|header)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AttestationError {
    #[error("signer set for {0} already registered")]
    DuplicateRegistration(ChainId),
    #[error("threshold {threshold} out of range for {members} members")]
    ThresholdOutOfRange { threshold: u32, members: usize },
    #[error("signer set members are not distinct")]
    DuplicateMember,
    #[error("control contract for {0} already registered with a different address")]
    ControlContractImmutable(ChainId),
    #[error("unknown source chain {0}")]
    UnknownSourceChain(ChainId),
    #[error("threshold unmet: {valid} valid signatures, {threshold} required")]
    ThresholdUnmet { valid: usize, threshold: u32 },
    #[error("no relayed header for {chain} at height {height}")]
    NoRelayedHeader { chain: ChainId, height: u64 },
    #[error("conflicting header for {chain} at height {height}")]
    ConflictingHeader { chain: ChainId, height: u64 },
    #[error("proof mismatch: {0}")]
    ProofMismatch(&'static str),
    #[error("wrong emitter: event not emitted by the registered control contract")]
    WrongEmitter,
    #[error("proof kind does not match the configured {0} attestation mode")]
    WrongProofKind(AttestationMode),
    #[error("not a protocol event: {0}")]
    NotProtocolEvent(#[from] CodecError),
}

/// Opaque signature bytes.
#[derive(Clone, PartialEq, Eq, Serialize)]
pub struct Signature(#[serde(with = "crate::chain_sim::hex_bytes")] pub Vec<u8>);

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Sig({})", hex::encode(&self.0[..self.0.len().min(6)]))
    }
}

/// Signer abstraction. Implementations must be deterministic.
pub trait SignatureScheme: Send + Sync + fmt::Debug {
    fn sign(&self, signer: SignerId, message: &[u8]) -> Signature;
    fn verify(&self, signer: SignerId, message: &[u8], signature: &Signature) -> bool;
}

/// HMAC-SHA256 tag under a per-signer key derived from a master seed. The
/// verifier derives the same keys, so it stands in for a public-key registry.
#[derive(Clone, Debug)]
pub struct KeyedTagScheme {
    master: Digest,
}

impl KeyedTagScheme {
    pub fn new(seed: u64) -> Self {
        Self {
            master: hash_parts(&[b"gpact.keyed-tag.master", &seed.to_be_bytes()]),
        }
    }

    fn key(&self, signer: SignerId) -> Digest {
        hash_parts(&[
            b"gpact.keyed-tag.signer",
            &self.master.0,
            &signer.0.to_be_bytes(),
        ])
    }

    fn tag(&self, signer: SignerId, message: &[u8]) -> Vec<u8> {
        let mut mac = <Hmac<Sha256> as KeyInit>::new_from_slice(&self.key(signer).0)
            .expect("hmac accepts any key length");
        mac.update(message);
        mac.finalize().into_bytes().to_vec()
    }
}

impl SignatureScheme for KeyedTagScheme {
    fn sign(&self, signer: SignerId, message: &[u8]) -> Signature {
        Signature(self.tag(signer, message))
    }

    fn verify(&self, signer: SignerId, message: &[u8], signature: &Signature) -> bool {
        let mut mac = <Hmac<Sha256> as KeyInit>::new_from_slice(&self.key(signer).0)
            .expect("hmac accepts any key length");
        mac.update(message);
        mac.verify_slice(&signature.0).is_ok()
    }
}

pub type SharedScheme = Arc<dyn SignatureScheme>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SignerSet {
    pub chain: ChainId,
    pub members: Vec<SignerId>,
    pub threshold: u32,
}

impl SignerSet {
    pub fn validate(&self) -> Result<(), AttestationError> {
        if self.threshold == 0 || self.threshold as usize > self.members.len() {
            return Err(AttestationError::ThresholdOutOfRange {
                threshold: self.threshold,
                members: self.members.len(),
            });
        }
        let distinct: BTreeSet<_> = self.members.iter().collect();
        if distinct.len() != self.members.len() {
            return Err(AttestationError::DuplicateMember);
        }
        Ok(())
    }

    /// Number of distinct members with a valid signature over `message`.
    pub fn count_valid(
        &self,
        scheme: &dyn SignatureScheme,
        message: &[u8],
        signatures: &[(SignerId, Signature)],
    ) -> usize {
        let members: BTreeSet<_> = self.members.iter().copied().collect();
        signatures
            .iter()
            .filter(|(s, sig)| members.contains(s) && scheme.verify(*s, message, sig))
            .map(|(s, _)| *s)
            .collect::<BTreeSet<_>>()
            .len()
    }

    fn check_threshold(
        &self,
        scheme: &dyn SignatureScheme,
        message: &[u8],
        signatures: &[(SignerId, Signature)],
    ) -> Result<(), AttestationError> {
        let valid = self.count_valid(scheme, message, signatures);
        if valid < self.threshold as usize {
            return Err(AttestationError::ThresholdUnmet {
                valid,
                threshold: self.threshold,
            });
        }
        Ok(())
    }
}

impl Encode for SignerSet {
    fn encode_to(&self, enc: &mut Encoder) {
        enc.value(&self.chain)
            .list(&self.members)
            .u32(self.threshold);
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum EventProof {
    ThresholdSignatures(Vec<(SignerId, Signature)>),
    HeaderProof {
        height: u64,
        receipt_index: u32,
        event_index: u32,
        /// The full receipt, so the verifier can check the event's position.
        receipt: Receipt,
        merkle: MerkleProof,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AttestedEvent {
    pub event: LogEvent,
    pub source_chain: ChainId,
    pub proof: EventProof,
}

impl Encode for (SignerId, Signature) {
    fn encode_to(&self, enc: &mut Encoder) {
        enc.value(&self.0).bytes(&self.1 .0);
    }
}

impl Encode for AttestedEvent {
    fn encode_to(&self, enc: &mut Encoder) {
        enc.value(&self.event).value(&self.source_chain);
        match &self.proof {
            EventProof::ThresholdSignatures(sigs) => {
                enc.u8(0).list(sigs);
            }
            EventProof::HeaderProof {
                height,
                receipt_index,
                event_index,
                receipt,
                merkle,
            } => {
                enc.u8(1)
                    .u64(*height)
                    .u32(*receipt_index)
                    .u32(*event_index)
                    .value(receipt)
                    .value(merkle);
            }
        }
    }
}

/// Bytes signed by validators in direct mode.
pub fn event_message(source: ChainId, event: &LogEvent) -> Vec<u8> {
    let mut enc = Encoder::new();
    enc.raw(b"gpact.event").value(&source).value(event);
    enc.finish()
}

/// Bytes signed by relayers in header mode.
pub fn header_message(header: &BlockHeader) -> Vec<u8> {
    let mut enc = Encoder::new();
    enc.raw(b"gpact.header").value(header);
    enc.finish()
}

pub fn sign_event(
    scheme: &dyn SignatureScheme,
    event: LogEvent,
    source_chain: ChainId,
    signers: &[SignerId],
) -> AttestedEvent {
    let msg = event_message(source_chain, &event);
    let sigs = signers
        .iter()
        .map(|s| (*s, scheme.sign(*s, &msg)))
        .collect();
    AttestedEvent {
        event,
        source_chain,
        proof: EventProof::ThresholdSignatures(sigs),
    }
}

pub fn sign_header(
    scheme: &dyn SignatureScheme,
    header: &BlockHeader,
    signers: &[SignerId],
) -> Vec<(SignerId, Signature)> {
    let msg = header_message(header);
    signers
        .iter()
        .map(|s| (*s, scheme.sign(*s, &msg)))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RelayOutcome {
    Stored,
    AlreadyStored,
}

/// Registrar contract state on one chain.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegistrarState {
    pub chain: ChainId,
    pub mode: AttestationMode,
    pub signer_sets: BTreeMap<ChainId, SignerSet>,
    pub control_contracts: BTreeMap<ChainId, Address>,
    pub relayed_headers: BTreeMap<(ChainId, u64), BlockHeader>,
}

impl RegistrarState {
    pub fn new(chain: ChainId, mode: AttestationMode) -> Self {
        Self {
            chain,
            mode,
            signer_sets: BTreeMap::new(),
            control_contracts: BTreeMap::new(),
            relayed_headers: BTreeMap::new(),
        }
    }

    pub fn register_signer_set(
        &mut self,
        for_chain: ChainId,
        set: SignerSet,
    ) -> Result<(), AttestationError> {
        if self.signer_sets.contains_key(&for_chain) {
            return Err(AttestationError::DuplicateRegistration(for_chain));
        }
        set.validate()?;
        self.signer_sets.insert(for_chain, set);
        Ok(())
    }

    pub fn register_control_contract(
        &mut self,
        chain: ChainId,
        address: Address,
    ) -> Result<(), AttestationError> {
        match self.control_contracts.get(&chain) {
            Some(existing) if *existing != address => {
                Err(AttestationError::ControlContractImmutable(chain))
            }
            _ => {
                self.control_contracts.insert(chain, address);
                Ok(())
            }
        }
    }

    pub fn has_header(&self, chain: ChainId, height: u64) -> bool {
        self.relayed_headers.contains_key(&(chain, height))
    }

    pub fn relay_header(
        &mut self,
        scheme: &dyn SignatureScheme,
        header: BlockHeader,
        signatures: &[(SignerId, Signature)],
    ) -> Result<RelayOutcome, AttestationError> {
        let key = (header.chain, header.height);
        if let Some(existing) = self.relayed_headers.get(&key) {
            return if *existing == header {
                Ok(RelayOutcome::AlreadyStored)
            } else {
                Err(AttestationError::ConflictingHeader {
                    chain: header.chain,
                    height: header.height,
                })
            };
        }
        let set = self
            .signer_sets
            .get(&header.chain)
            .ok_or(AttestationError::UnknownSourceChain(header.chain))?;
        set.check_threshold(scheme, &header_message(&header), signatures)?;
        self.relayed_headers.insert(key, header);
        Ok(RelayOutcome::Stored)
    }

    /// Checks an attested event and returns the decoded protocol event.
    pub fn verify(
        &self,
        scheme: &dyn SignatureScheme,
        local_headers: &[BlockHeader],
        att: &AttestedEvent,
    ) -> Result<ProtocolEvent, AttestationError> {
        let set = self
            .signer_sets
            .get(&att.source_chain)
            .ok_or(AttestationError::UnknownSourceChain(att.source_chain))?;
        match (&att.proof, self.mode) {
            (EventProof::ThresholdSignatures(sigs), AttestationMode::Direct) => {
                set.check_threshold(scheme, &event_message(att.source_chain, &att.event), sigs)?;
            }
            (
                EventProof::HeaderProof {
                    height,
                    receipt_index,
                    event_index,
                    receipt,
                    merkle,
                },
                AttestationMode::Header,
            ) => {
                let header = if att.source_chain == self.chain {
                    local_headers
                        .get(*height as usize)
                        .filter(|h| h.height == *height)
                } else {
                    self.relayed_headers.get(&(att.source_chain, *height))
                }
                .ok_or(AttestationError::NoRelayedHeader {
                    chain: att.source_chain,
                    height: *height,
                })?;
                if leaf_digest(&receipt.encode()) != merkle.leaf_digest {
                    return Err(AttestationError::ProofMismatch(
                        "receipt does not match leaf",
                    ));
                }
                if path_index(merkle) != Some(*receipt_index as u64) {
                    return Err(AttestationError::ProofMismatch("receipt index"));
                }
                if !merkle.verify(&header.receipt_root) {
                    return Err(AttestationError::ProofMismatch("merkle root"));
                }
                if !receipt.status.is_success() {
                    return Err(AttestationError::ProofMismatch("receipt status"));
                }
                if receipt.events.get(*event_index as usize) != Some(&att.event) {
                    return Err(AttestationError::ProofMismatch(
                        "event not at claimed index",
                    ));
                }
            }
            _ => return Err(AttestationError::WrongProofKind(self.mode)),
        }
        let control = self
            .control_contracts
            .get(&att.source_chain)
            .ok_or(AttestationError::UnknownSourceChain(att.source_chain))?;
        if att.event.emitter != *control {
            return Err(AttestationError::WrongEmitter);
        }
        Ok(ProtocolEvent::from_log(&att.event)?)
    }
}

/// Leaf index implied by the sibling sides, or `None` for paths too long to index.
fn path_index(proof: &MerkleProof) -> Option<u64> {
    if proof.siblings.len() >= 64 {
        return None;
    }
    Some(
        proof
            .siblings
            .iter()
            .enumerate()
            .map(|(level, (side, _))| match side {
                Side::Left => 1u64 << level,
                Side::Right => 0,
            })
            .sum(),
    )
}

impl Encode for RegistrarState {
    fn encode_to(&self, enc: &mut Encoder) {
        enc.value(&self.chain);
        enc.u32(self.signer_sets.len() as u32);
        for set in self.signer_sets.values() {
            enc.value(set);
        }
        enc.u32(self.control_contracts.len() as u32);
        for (c, a) in &self.control_contracts {
            enc.value(c).address(a);
        }
        enc.u32(self.relayed_headers.len() as u32);
        for h in self.relayed_headers.values() {
            enc.value(h);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain_sim::{Topic, TxStatus};
    use crate::ids::TxId;
    use crate::merkle::{build_proof, root_of};
    use crate::protocol::RootEvent;
    use crate::storage::Decision;

    const SRC: ChainId = ChainId(2);
    const DST: ChainId = ChainId(1);

    fn control(c: ChainId) -> Address {
        Address::derive(&format!("control/{}", c.0))
    }

    fn set(n: u32, threshold: u32) -> SignerSet {
        SignerSet {
            chain: SRC,
            members: (0..n).map(|i| SignerId(200 + i)).collect(),
            threshold,
        }
    }

    fn registrar(mode: AttestationMode) -> RegistrarState {
        let mut r = RegistrarState::new(DST, mode);
        r.register_signer_set(SRC, set(3, 2)).unwrap();
        r.register_control_contract(SRC, control(SRC)).unwrap();
        r
    }

    fn root_log() -> LogEvent {
        ProtocolEvent::Root(RootEvent {
            tx_id: TxId::derive("x"),
            root_chain: SRC,
            decision: Decision::Commit,
        })
        .to_log(control(SRC))
    }

    #[test]
    fn signer_set_registration_rules() {
        let mut r = RegistrarState::new(DST, AttestationMode::Direct);
        assert!(matches!(
            r.register_signer_set(SRC, set(3, 0)),
            Err(AttestationError::ThresholdOutOfRange { .. })
        ));
        assert!(matches!(
            r.register_signer_set(SRC, set(3, 4)),
            Err(AttestationError::ThresholdOutOfRange { .. })
        ));
        r.register_signer_set(SRC, set(3, 2)).unwrap();
        assert_eq!(
            r.register_signer_set(SRC, set(3, 2)),
            Err(AttestationError::DuplicateRegistration(SRC))
        );
        let dup = SignerSet {
            chain: ChainId(9),
            members: vec![SignerId(1), SignerId(1)],
            threshold: 1,
        };
        assert_eq!(
            r.register_signer_set(ChainId(9), dup),
            Err(AttestationError::DuplicateMember)
        );
    }

    #[test]
    fn control_contract_is_immutable() {
        let mut r = registrar(AttestationMode::Direct);
        r.register_control_contract(SRC, control(SRC)).unwrap();
        assert!(r
            .register_control_contract(SRC, Address::derive("other"))
            .is_err());
    }

    #[test]
    fn direct_threshold() {
        let scheme = KeyedTagScheme::new(1);
        let r = registrar(AttestationMode::Direct);
        let members = set(3, 2).members;
        let ok = sign_event(&scheme, root_log(), SRC, &members[..2]);
        assert!(r.verify(&scheme, &[], &ok).is_ok());
        let short = sign_event(&scheme, root_log(), SRC, &members[..1]);
        assert_eq!(
            r.verify(&scheme, &[], &short),
            Err(AttestationError::ThresholdUnmet {
                valid: 1,
                threshold: 2
            })
        );
        // the same signer twice counts once
        let doubled = sign_event(&scheme, root_log(), SRC, &[members[0], members[0]]);
        assert!(r.verify(&scheme, &[], &doubled).is_err());
    }

    #[test]
    fn flipped_signature_rejected() {
        let scheme = KeyedTagScheme::new(1);
        let r = registrar(AttestationMode::Direct);
        let members = set(3, 2).members;
        let mut att = sign_event(&scheme, root_log(), SRC, &members[..2]);
        if let EventProof::ThresholdSignatures(sigs) = &mut att.proof {
            sigs[0].1 .0[0] ^= 1;
        }
        assert!(matches!(
            r.verify(&scheme, &[], &att),
            Err(AttestationError::ThresholdUnmet { valid: 1, .. })
        ));
    }

    #[test]
    fn unknown_source_chain() {
        let scheme = KeyedTagScheme::new(1);
        let r = registrar(AttestationMode::Direct);
        let att = sign_event(&scheme, root_log(), ChainId(77), &[SignerId(1)]);
        assert_eq!(
            r.verify(&scheme, &[], &att),
            Err(AttestationError::UnknownSourceChain(ChainId(77)))
        );
    }

    fn header_fixture() -> (BlockHeader, AttestedEvent) {
        let receipts = [
            Receipt {
                tx_digest: Digest::ZERO,
                status: TxStatus::Success,
                events: vec![],
            },
            Receipt {
                tx_digest: Digest([1; 32]),
                status: TxStatus::Success,
                events: vec![root_log()],
            },
        ];
        let encoded: Vec<Vec<u8>> = receipts.iter().map(|r| r.encode()).collect();
        let leaves: Vec<_> = encoded.iter().map(|e| leaf_digest(e)).collect();
        let header = BlockHeader {
            chain: SRC,
            height: 4,
            timestamp: 4,
            receipt_root: root_of(&encoded),
            parent_digest: Digest::ZERO,
        };
        let att = AttestedEvent {
            event: root_log(),
            source_chain: SRC,
            proof: EventProof::HeaderProof {
                height: 4,
                receipt_index: 1,
                event_index: 0,
                receipt: receipts[1].clone(),
                merkle: build_proof(&leaves, 1).unwrap(),
            },
        };
        (header, att)
    }

    #[test]
    fn header_mode_requires_relay() {
        let scheme = KeyedTagScheme::new(1);
        let mut r = registrar(AttestationMode::Header);
        let (header, att) = header_fixture();
        assert_eq!(
            r.verify(&scheme, &[], &att),
            Err(AttestationError::NoRelayedHeader {
                chain: SRC,
                height: 4
            })
        );
        let sigs = sign_header(&scheme, &header, &set(3, 2).members[..2]);
        assert_eq!(
            r.relay_header(&scheme, header.clone(), &sigs),
            Ok(RelayOutcome::Stored)
        );
        assert!(r.verify(&scheme, &[], &att).is_ok());
        assert_eq!(
            r.relay_header(&scheme, header.clone(), &sigs),
            Ok(RelayOutcome::AlreadyStored)
        );
        let mut forged = header;
        forged.receipt_root = Digest([9; 32]);
        let forged_sigs = sign_header(&scheme, &forged, &set(3, 2).members);
        assert_eq!(
            r.relay_header(&scheme, forged, &forged_sigs),
            Err(AttestationError::ConflictingHeader {
                chain: SRC,
                height: 4
            })
        );
    }

    #[test]
    fn relay_below_threshold_rejected() {
        let scheme = KeyedTagScheme::new(1);
        let mut r = registrar(AttestationMode::Header);
        let (header, _) = header_fixture();
        let sigs = sign_header(&scheme, &header, &set(3, 2).members[..1]);
        assert!(matches!(
            r.relay_header(&scheme, header, &sigs),
            Err(AttestationError::ThresholdUnmet { .. })
        ));
        assert!(r.relayed_headers.is_empty());
    }

    #[test]
    fn header_mode_wrong_index_rejected() {
        let scheme = KeyedTagScheme::new(1);
        let mut r = registrar(AttestationMode::Header);
        let (header, mut att) = header_fixture();
        let sigs = sign_header(&scheme, &header, &set(3, 2).members);
        r.relay_header(&scheme, header, &sigs).unwrap();
        if let EventProof::HeaderProof { receipt_index, .. } = &mut att.proof {
            *receipt_index = 0;
        }
        assert!(matches!(
            r.verify(&scheme, &[], &att),
            Err(AttestationError::ProofMismatch(_))
        ));
    }

    #[test]
    fn modes_do_not_mix() {
        let scheme = KeyedTagScheme::new(1);
        let direct = registrar(AttestationMode::Direct);
        let (_, header_att) = header_fixture();
        assert_eq!(
            direct.verify(&scheme, &[], &header_att),
            Err(AttestationError::WrongProofKind(AttestationMode::Direct))
        );
        let header = registrar(AttestationMode::Header);
        let signed = sign_event(&scheme, root_log(), SRC, &set(3, 2).members);
        assert_eq!(
            header.verify(&scheme, &[], &signed),
            Err(AttestationError::WrongProofKind(AttestationMode::Header))
        );
    }

    #[test]
    fn wrong_emitter_rejected() {
        let scheme = KeyedTagScheme::new(1);
        let r = registrar(AttestationMode::Direct);
        let mut log = root_log();
        log.emitter = Address::derive("decoy");
        let att = sign_event(&scheme, log, SRC, &set(3, 2).members);
        assert_eq!(
            r.verify(&scheme, &[], &att),
            Err(AttestationError::WrongEmitter)
        );
    }

    #[test]
    fn non_protocol_payload_rejected() {
        let scheme = KeyedTagScheme::new(1);
        let r = registrar(AttestationMode::Direct);
        let log = LogEvent {
            emitter: control(SRC),
            topic: Topic::APPLICATION,
            payload: vec![0xff],
        };
        let att = sign_event(&scheme, log, SRC, &set(3, 2).members);
        assert!(matches!(
            r.verify(&scheme, &[], &att),
            Err(AttestationError::NotProtocolEvent(_))
        ));
    }
}
