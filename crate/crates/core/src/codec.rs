//! Canonical byte encoding for everything that is hashed or signed.
//!
//! Fields are written in declaration order. Integers are big-endian and
//! fixed-width, fixed-size values (digests, addresses) are written raw,
//! variable-length byte strings and strings carry a `u32` length prefix,
//! lists carry a `u32` element count and enum variants a one-byte tag.
//! The full layout of every protocol type is documented in `docs/encoding.md`.

use thiserror::Error;

use crate::crypto::{hash, Address, Digest};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("unexpected end of input: needed {needed} bytes, {remaining} remaining")]
    UnexpectedEof { needed: usize, remaining: usize },
    #[error("invalid tag {tag} for {ty}")]
    InvalidTag { ty: &'static str, tag: u8 },
    #[error("invalid utf-8 string")]
    InvalidUtf8,
    #[error("{0} trailing bytes after value")]
    TrailingBytes(usize),
    #[error("length {0} exceeds remaining input")]
    LengthOverflow(u64),
}

#[derive(Debug, Default, Clone)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn bool(&mut self, v: bool) -> &mut Self {
        self.u8(v as u8)
    }

    pub fn raw(&mut self, bytes: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(bytes);
        self
    }

    pub fn bytes(&mut self, bytes: &[u8]) -> &mut Self {
        self.u32(bytes.len() as u32);
        self.raw(bytes)
    }

    pub fn str(&mut self, s: &str) -> &mut Self {
        self.bytes(s.as_bytes())
    }

    pub fn digest(&mut self, d: &Digest) -> &mut Self {
        self.raw(&d.0)
    }

    pub fn address(&mut self, a: &Address) -> &mut Self {
        self.raw(&a.0)
    }

    pub fn list<T: Encode>(&mut self, items: &[T]) -> &mut Self {
        self.u32(items.len() as u32);
        for item in items {
            item.encode_to(self);
        }
        self
    }

    pub fn value<T: Encode + ?Sized>(&mut self, v: &T) -> &mut Self {
        v.encode_to(self);
        self
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub struct Decoder<'a> {
    input: &'a [u8],
}

impl<'a> Decoder<'a> {
    pub fn new(input: &'a [u8]) -> Self {
        Self { input }
    }

    pub fn remaining(&self) -> usize {
        self.input.len()
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        if self.input.len() < n {
            return Err(CodecError::UnexpectedEof {
                needed: n,
                remaining: self.input.len(),
            });
        }
        let (head, tail) = self.input.split_at(n);
        self.input = tail;
        Ok(head)
    }

    pub fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32, CodecError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes(b.try_into().expect("4 bytes")))
    }

    pub fn u64(&mut self) -> Result<u64, CodecError> {
        let b = self.take(8)?;
        Ok(u64::from_be_bytes(b.try_into().expect("8 bytes")))
    }

    pub fn bool(&mut self) -> Result<bool, CodecError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            tag => Err(CodecError::InvalidTag { ty: "bool", tag }),
        }
    }

    pub fn bytes(&mut self) -> Result<Vec<u8>, CodecError> {
        let len = self.u32()? as usize;
        if len > self.input.len() {
            return Err(CodecError::LengthOverflow(len as u64));
        }
        Ok(self.take(len)?.to_vec())
    }

    pub fn string(&mut self) -> Result<String, CodecError> {
        String::from_utf8(self.bytes()?).map_err(|_| CodecError::InvalidUtf8)
    }

    pub fn digest(&mut self) -> Result<Digest, CodecError> {
        let b = self.take(32)?;
        Ok(Digest(b.try_into().expect("32 bytes")))
    }

    pub fn address(&mut self) -> Result<Address, CodecError> {
        let b = self.take(20)?;
        Ok(Address(b.try_into().expect("20 bytes")))
    }

    pub fn list<T: Decode>(&mut self) -> Result<Vec<T>, CodecError> {
        let n = self.u32()? as usize;
        // every element occupies at least one byte
        if n > self.input.len() {
            return Err(CodecError::LengthOverflow(n as u64));
        }
        (0..n).map(|_| T::decode_from(self)).collect()
    }

    pub fn finish(self) -> Result<(), CodecError> {
        if self.input.is_empty() {
            Ok(())
        } else {
            Err(CodecError::TrailingBytes(self.input.len()))
        }
    }
}

pub trait Encode {
    fn encode_to(&self, enc: &mut Encoder);

    fn encode(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        self.encode_to(&mut enc);
        enc.finish()
    }

    fn digest(&self) -> Digest {
        hash(&self.encode())
    }
}

pub trait Decode: Sized {
    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, CodecError>;

    /// Decode a complete value; trailing bytes are an error.
    fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut dec = Decoder::new(bytes);
        let v = Self::decode_from(&mut dec)?;
        dec.finish()?;
        Ok(v)
    }
}

impl Encode for Digest {
    fn encode_to(&self, enc: &mut Encoder) {
        enc.digest(self);
    }
}

impl Decode for Digest {
    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        dec.digest()
    }
}

impl Encode for Address {
    fn encode_to(&self, enc: &mut Encoder) {
        enc.address(self);
    }
}

impl Decode for Address {
    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        dec.address()
    }
}

impl Encode for u64 {
    fn encode_to(&self, enc: &mut Encoder) {
        enc.u64(*self);
    }
}

impl Decode for u64 {
    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        dec.u64()
    }
}

impl Encode for Vec<u8> {
    fn encode_to(&self, enc: &mut Encoder) {
        enc.bytes(self);
    }
}

impl Decode for Vec<u8> {
    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        dec.bytes()
    }
}

/// Builder for canonical function-argument lists.
///
/// Each argument is a length-prefixed byte string; the list carries a count.
#[derive(Debug, Default, Clone)]
pub struct Args {
    items: Vec<Vec<u8>>,
}

impl Args {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn u64(mut self, v: u64) -> Self {
        self.items.push(v.to_be_bytes().to_vec());
        self
    }

    pub fn address(mut self, a: Address) -> Self {
        self.items.push(a.0.to_vec());
        self
    }

    pub fn bytes(mut self, b: &[u8]) -> Self {
        self.items.push(b.to_vec());
        self
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.list(&self.items);
        enc.finish()
    }
}

/// Positional reader over an encoded argument list.
#[derive(Debug)]
pub struct ArgReader {
    items: std::vec::IntoIter<Vec<u8>>,
}

impl ArgReader {
    pub fn parse(encoded: &[u8]) -> Result<Self, CodecError> {
        let mut dec = Decoder::new(encoded);
        let items: Vec<Vec<u8>> = dec.list()?;
        dec.finish()?;
        Ok(Self {
            items: items.into_iter(),
        })
    }

    fn next_item(&mut self, width: usize) -> Result<Vec<u8>, CodecError> {
        let item = self.items.next().ok_or(CodecError::UnexpectedEof {
            needed: width,
            remaining: 0,
        })?;
        if item.len() != width {
            return Err(CodecError::LengthOverflow(item.len() as u64));
        }
        Ok(item)
    }

    pub fn u64(&mut self) -> Result<u64, CodecError> {
        let b = self.next_item(8)?;
        Ok(u64::from_be_bytes(b.try_into().expect("8 bytes")))
    }

    pub fn address(&mut self) -> Result<Address, CodecError> {
        let b = self.next_item(20)?;
        Ok(Address(b.try_into().expect("20 bytes")))
    }
}

/// Big-endian encoding of a single integer return value.
pub fn encode_u64(v: u64) -> Vec<u8> {
    v.to_be_bytes().to_vec()
}

/// Inverse of [`encode_u64`]; an empty value reads as zero (absent storage key).
pub fn decode_u64(bytes: &[u8]) -> Result<u64, CodecError> {
    match bytes.len() {
        0 => Ok(0),
        8 => Ok(u64::from_be_bytes(bytes.try_into().expect("8 bytes"))),
        n => Err(CodecError::LengthOverflow(n as u64)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integers_are_big_endian_fixed_width() {
        let mut enc = Encoder::new();
        enc.u32(1).u64(2);
        assert_eq!(enc.finish(), vec![0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0, 2]);
    }

    #[test]
    fn bytes_are_length_prefixed() {
        let mut enc = Encoder::new();
        enc.bytes(b"hi");
        assert_eq!(enc.finish(), vec![0, 0, 0, 2, b'h', b'i']);
    }

    #[test]
    fn decode_rejects_trailing_bytes() {
        let mut bytes = 7u64.encode();
        bytes.push(0);
        assert_eq!(u64::decode(&bytes), Err(CodecError::TrailingBytes(1)));
    }

    #[test]
    fn decode_rejects_truncation() {
        assert!(matches!(
            Vec::<u8>::decode(&[0, 0, 0, 5, 1]),
            Err(CodecError::LengthOverflow(5))
        ));
    }

    #[test]
    fn args_round_trip() {
        let a = Address::derive("buyer");
        let enc = Args::new().u64(10).address(a).encode();
        let mut r = ArgReader::parse(&enc).unwrap();
        assert_eq!(r.u64().unwrap(), 10);
        assert_eq!(r.address().unwrap(), a);
        assert!(r.u64().is_err());
    }

    #[test]
    fn empty_value_reads_as_zero() {
        assert_eq!(decode_u64(&[]).unwrap(), 0);
        assert_eq!(decode_u64(&encode_u64(42)).unwrap(), 42);
    }
}
