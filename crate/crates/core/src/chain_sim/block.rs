use serde::Serialize;

use crate::codec::{CodecError, Decode, Decoder, Encode, Encoder};
use crate::crypto::{Address, Digest};
use crate::ids::ChainId;

/// Event-kind discriminator carried by every log event.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Topic(pub u32);

impl Topic {
    pub const START: Topic = Topic(1);
    pub const SEGMENT: Topic = Topic(2);
    pub const ROOT: Topic = Topic(3);
    pub const SIGNALLING: Topic = Topic(4);
    /// First topic value available to business contracts.
    pub const APPLICATION: Topic = Topic(0x100);

    pub fn is_protocol(self) -> bool {
        (1..=4).contains(&self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LogEvent {
    pub emitter: Address,
    pub topic: Topic,
    #[serde(with = "hex_bytes")]
    pub payload: Vec<u8>,
}

impl Encode for LogEvent {
    fn encode_to(&self, enc: &mut Encoder) {
        enc.address(&self.emitter)
            .u32(self.topic.0)
            .bytes(&self.payload);
    }
}

impl Decode for LogEvent {
    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(LogEvent {
            emitter: dec.address()?,
            topic: Topic(dec.u32()?),
            payload: dec.bytes()?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum TxStatus {
    Success,
    Failure(String),
}

impl TxStatus {
    pub fn is_success(&self) -> bool {
        matches!(self, TxStatus::Success)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Receipt {
    pub tx_digest: Digest,
    pub status: TxStatus,
    pub events: Vec<LogEvent>,
}

impl Encode for Receipt {
    fn encode_to(&self, enc: &mut Encoder) {
        enc.digest(&self.tx_digest);
        match &self.status {
            TxStatus::Success => enc.u8(0),
            TxStatus::Failure(reason) => enc.u8(1).str(reason),
        };
        enc.list(&self.events);
    }
}

impl Decode for Receipt {
    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        let tx_digest = dec.digest()?;
        let status = match dec.u8()? {
            0 => TxStatus::Success,
            1 => TxStatus::Failure(dec.string()?),
            tag => {
                return Err(CodecError::InvalidTag {
                    ty: "TxStatus",
                    tag,
                })
            }
        };
        Ok(Receipt {
            tx_digest,
            status,
            events: dec.list()?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BlockHeader {
    pub chain: ChainId,
    pub height: u64,
    /// Period index at which the block was produced.
    pub timestamp: u64,
    pub receipt_root: Digest,
    pub parent_digest: Digest,
}

impl Encode for BlockHeader {
    fn encode_to(&self, enc: &mut Encoder) {
        enc.value(&self.chain)
            .u64(self.height)
            .u64(self.timestamp)
            .digest(&self.receipt_root)
            .digest(&self.parent_digest);
    }
}

impl Decode for BlockHeader {
    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(BlockHeader {
            chain: ChainId::decode_from(dec)?,
            height: dec.u64()?,
            timestamp: dec.u64()?,
            receipt_root: dec.digest()?,
            parent_digest: dec.digest()?,
        })
    }
}

/// Position of one log event in a chain's history.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct EventLocation {
    pub chain: ChainId,
    pub height: u64,
    pub receipt_index: u32,
    pub event_index: u32,
}

pub(crate) mod hex_bytes {
    pub fn serialize<S: serde::Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(bytes))
    }
}
