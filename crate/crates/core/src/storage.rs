//! Contract-granular lockable key-value storage.
//!
//! Plain reads fail while the contract is locked. Writes outside a crosschain
//! call go straight to normal storage; writes inside one lock the whole
//! contract for that transaction and land in provisional storage, which a later
//! signal either applies or drops before unlocking.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::codec::{Encode, Encoder};
use crate::ids::XtxRef;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StorageError {
    #[error("contract locked by crosschain transaction {0:?}")]
    Locked(XtxRef),
    #[error("contract not locked")]
    NotLocked,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Decision {
    Commit,
    Abort,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize)]
pub enum LockState {
    #[default]
    Unlocked,
    LockedBy(XtxRef),
}

/// What a successful write did; the caller registers new locks with the
/// control contract.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WriteEffect {
    Normal,
    Provisional { newly_locked: bool },
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LockableContractState {
    normal: BTreeMap<Vec<u8>, Vec<u8>>,
    provisional: BTreeMap<Vec<u8>, Vec<u8>>,
    lock: LockState,
}

impl LockableContractState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_entries<I: IntoIterator<Item = (Vec<u8>, Vec<u8>)>>(entries: I) -> Self {
        Self {
            normal: entries.into_iter().collect(),
            ..Self::default()
        }
    }

    pub fn lock(&self) -> LockState {
        self.lock
    }

    pub fn is_locked(&self) -> bool {
        self.lock != LockState::Unlocked
    }

    pub fn normal(&self) -> &BTreeMap<Vec<u8>, Vec<u8>> {
        &self.normal
    }

    pub fn provisional(&self) -> &BTreeMap<Vec<u8>, Vec<u8>> {
        &self.provisional
    }

    /// Normal value regardless of lock state. Inspection only; contract code
    /// goes through [`read`](Self::read).
    pub fn peek(&self, key: &[u8]) -> Vec<u8> {
        self.normal.get(key).cloned().unwrap_or_default()
    }

    pub fn read(&self, key: &[u8]) -> Result<Vec<u8>, StorageError> {
        if let LockState::LockedBy(owner) = self.lock {
            return Err(StorageError::Locked(owner));
        }
        Ok(self.peek(key))
    }

    pub fn write(
        &mut self,
        key: &[u8],
        value: Vec<u8>,
        context: Option<XtxRef>,
    ) -> Result<WriteEffect, StorageError> {
        match (self.lock, context) {
            (LockState::LockedBy(owner), Some(ctx)) if owner == ctx => {
                self.provisional.insert(key.to_vec(), value);
                Ok(WriteEffect::Provisional {
                    newly_locked: false,
                })
            }
            (LockState::LockedBy(owner), _) => Err(StorageError::Locked(owner)),
            (LockState::Unlocked, None) => {
                self.normal.insert(key.to_vec(), value);
                Ok(WriteEffect::Normal)
            }
            (LockState::Unlocked, Some(ctx)) => {
                self.lock = LockState::LockedBy(ctx);
                self.provisional.insert(key.to_vec(), value);
                Ok(WriteEffect::Provisional { newly_locked: true })
            }
        }
    }

    /// Read-your-own-writes inside a crosschain call.
    pub fn read_in_crosschain(&self, key: &[u8], context: XtxRef) -> Result<Vec<u8>, StorageError> {
        match self.lock {
            LockState::LockedBy(owner) if owner != context => Err(StorageError::Locked(owner)),
            LockState::LockedBy(_) => Ok(self
                .provisional
                .get(key)
                .cloned()
                .unwrap_or_else(|| self.peek(key))),
            LockState::Unlocked => Ok(self.peek(key)),
        }
    }

    pub fn signal(&mut self, decision: Decision, context: XtxRef) -> Result<(), StorageError> {
        match self.lock {
            LockState::Unlocked => Err(StorageError::NotLocked),
            LockState::LockedBy(owner) if owner != context => Err(StorageError::Locked(owner)),
            LockState::LockedBy(_) => {
                let provisional = std::mem::take(&mut self.provisional);
                if decision == Decision::Commit {
                    self.normal.extend(provisional);
                }
                self.lock = LockState::Unlocked;
                Ok(())
            }
        }
    }
}

impl Encode for LockableContractState {
    fn encode_to(&self, enc: &mut Encoder) {
        fn map(enc: &mut Encoder, m: &BTreeMap<Vec<u8>, Vec<u8>>) {
            enc.u32(m.len() as u32);
            for (k, v) in m {
                enc.bytes(k).bytes(v);
            }
        }
        map(enc, &self.normal);
        map(enc, &self.provisional);
        match self.lock {
            LockState::Unlocked => {
                enc.u8(0);
            }
            LockState::LockedBy(x) => {
                enc.u8(1).value(&x);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::{ChainId, TxId};

    fn ctx(n: &str) -> XtxRef {
        XtxRef {
            root_chain: ChainId(1),
            tx_id: TxId::derive(n),
        }
    }

    fn kv(k: &str, v: &str) -> (Vec<u8>, Vec<u8>) {
        (k.as_bytes().to_vec(), v.as_bytes().to_vec())
    }

    #[test]
    fn plain_read_present_and_absent() {
        let s = LockableContractState::with_entries([kv("k", "v")]);
        assert_eq!(s.read(b"k").unwrap(), b"v");
        assert_eq!(s.read(b"missing").unwrap(), Vec::<u8>::new());
    }

    #[test]
    fn read_while_locked_fails() {
        let mut s = LockableContractState::new();
        s.write(b"k", b"v".to_vec(), Some(ctx("a"))).unwrap();
        assert_eq!(s.read(b"k"), Err(StorageError::Locked(ctx("a"))));
    }

    #[test]
    fn single_chain_write_goes_to_normal() {
        let mut s = LockableContractState::new();
        assert_eq!(
            s.write(b"k", b"v".to_vec(), None).unwrap(),
            WriteEffect::Normal
        );
        assert_eq!(s.read(b"k").unwrap(), b"v");
        assert!(!s.is_locked());
    }

    #[test]
    fn crosschain_write_locks_and_buffers() {
        let mut s = LockableContractState::with_entries([kv("k", "v1")]);
        let eff = s.write(b"k", b"v2".to_vec(), Some(ctx("a"))).unwrap();
        assert_eq!(eff, WriteEffect::Provisional { newly_locked: true });
        assert_eq!(s.lock(), LockState::LockedBy(ctx("a")));
        assert_eq!(s.peek(b"k"), b"v1");
        assert_eq!(s.provisional().get(b"k".as_slice()).unwrap(), b"v2");
    }

    #[test]
    fn same_context_writes_accumulate() {
        let mut s = LockableContractState::new();
        s.write(b"a", b"1".to_vec(), Some(ctx("a"))).unwrap();
        let eff = s.write(b"b", b"2".to_vec(), Some(ctx("a"))).unwrap();
        assert_eq!(
            eff,
            WriteEffect::Provisional {
                newly_locked: false
            }
        );
        assert_eq!(s.provisional().len(), 2);
    }

    #[test]
    fn write_locked_by_other_fails() {
        let mut s = LockableContractState::new();
        s.write(b"k", b"v".to_vec(), Some(ctx("a"))).unwrap();
        assert_eq!(
            s.write(b"k", b"w".to_vec(), Some(ctx("b"))),
            Err(StorageError::Locked(ctx("a")))
        );
        assert_eq!(
            s.write(b"k", b"w".to_vec(), None),
            Err(StorageError::Locked(ctx("a")))
        );
    }

    #[test]
    fn read_in_crosschain_sees_own_writes() {
        let mut s = LockableContractState::with_entries([kv("k", "v1"), kv("j", "n")]);
        s.write(b"k", b"v2".to_vec(), Some(ctx("a"))).unwrap();
        assert_eq!(s.read_in_crosschain(b"k", ctx("a")).unwrap(), b"v2");
        assert_eq!(s.read_in_crosschain(b"j", ctx("a")).unwrap(), b"n");
        assert!(s.read_in_crosschain(b"k", ctx("b")).is_err());
    }

    #[test]
    fn commit_applies_provisional() {
        let mut s = LockableContractState::with_entries([kv("k", "v1")]);
        s.write(b"k", b"v2".to_vec(), Some(ctx("a"))).unwrap();
        s.signal(Decision::Commit, ctx("a")).unwrap();
        assert_eq!(s.read(b"k").unwrap(), b"v2");
        assert!(s.provisional().is_empty());
    }

    #[test]
    fn abort_discards_provisional() {
        let mut s = LockableContractState::with_entries([kv("k", "v1")]);
        s.write(b"k", b"v2".to_vec(), Some(ctx("a"))).unwrap();
        s.signal(Decision::Abort, ctx("a")).unwrap();
        assert_eq!(s.read(b"k").unwrap(), b"v1");
        assert!(!s.is_locked());
    }

    #[test]
    fn signal_errors() {
        let mut s = LockableContractState::new();
        assert_eq!(
            s.signal(Decision::Commit, ctx("a")),
            Err(StorageError::NotLocked)
        );
        s.write(b"k", b"v".to_vec(), Some(ctx("a"))).unwrap();
        assert_eq!(
            s.signal(Decision::Commit, ctx("b")),
            Err(StorageError::Locked(ctx("a")))
        );
    }
}
