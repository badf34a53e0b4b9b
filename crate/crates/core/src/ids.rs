use std::fmt;

use serde::{Deserialize, Serialize};

use crate::codec::{CodecError, Decode, Decoder, Encode, Encoder};
use crate::crypto::{hash_parts, Digest};

/// Identifier of one simulated blockchain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChainId(pub u64);

impl fmt::Display for ChainId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "chain-{}", self.0)
    }
}

impl Encode for ChainId {
    fn encode_to(&self, enc: &mut Encoder) {
        enc.u64(self.0);
    }
}

impl Decode for ChainId {
    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(ChainId(dec.u64()?))
    }
}

/// 256-bit crosschain transaction identifier.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct TxId(pub Digest);

impl TxId {
    pub fn derive(label: &str) -> TxId {
        TxId(hash_parts(&[b"gpact.txid.", label.as_bytes()]))
    }
}

impl fmt::Debug for TxId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TxId({}..)", &self.0.to_hex()[..12])
    }
}

impl fmt::Display for TxId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.to_hex()[..16])
    }
}

impl Encode for TxId {
    fn encode_to(&self, enc: &mut Encoder) {
        enc.digest(&self.0);
    }
}

impl Decode for TxId {
    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(TxId(dec.digest()?))
    }
}

/// A validator or relayer identity. Globally unique across the simulation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SignerId(pub u32);

impl Encode for SignerId {
    fn encode_to(&self, enc: &mut Encoder) {
        enc.u32(self.0);
    }
}

/// The pair that names one crosschain transaction everywhere: root chain plus id.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct XtxRef {
    pub root_chain: ChainId,
    pub tx_id: TxId,
}

impl Encode for XtxRef {
    fn encode_to(&self, enc: &mut Encoder) {
        enc.value(&self.root_chain).value(&self.tx_id);
    }
}

impl Decode for XtxRef {
    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(XtxRef {
            root_chain: ChainId::decode_from(dec)?,
            tx_id: TxId::decode_from(dec)?,
        })
    }
}
