use std::fmt;

use thiserror::Error;

use crate::codec::CodecError;
use crate::crypto::Address;
use crate::ids::{ChainId, XtxRef};
use crate::storage::{LockableContractState, StorageError};

use super::FunctionCallSpec;

/// Failure raised by business logic or by the call-checking machinery.
///
/// Inside a segment or root these become an error outcome rather than a
/// rejected transaction.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AppError {
    #[error("revert: {0}")]
    Revert(String),
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error("bad arguments: {0}")]
    Args(#[from] CodecError),
    #[error("unknown function {0}")]
    UnknownFunction(String),
    #[error("crosscall mismatch: expected {expected}, got {actual}")]
    CallMismatch { expected: String, actual: String },
    #[error("unexpected crosscall {0}: every committed child already consumed")]
    UnexpectedCall(String),
    #[error("{0} committed child call(s) never made")]
    MissingCalls(usize),
    #[error("crosschain call outside a crosschain context")]
    NotCrosschain,
    #[error("nondeterministic: {0}")]
    Nondeterministic(&'static str),
    #[error("forced revert of {0}")]
    Forced(String),
    #[error("unknown contract {0} on {1}")]
    UnknownContract(Address, ChainId),
}

/// What business logic can see and do while it runs.
pub trait ContractContext {
    fn this(&self) -> Address;
    fn chain(&self) -> ChainId;
    fn read(&mut self, key: &[u8]) -> Result<Vec<u8>, AppError>;
    fn write(&mut self, key: &[u8], value: Vec<u8>) -> Result<(), AppError>;
    fn cross_call(&mut self, call: FunctionCallSpec) -> Result<Vec<u8>, AppError>;
    fn block_timestamp(&mut self) -> Result<u64, AppError>;
}

/// A native contract: a set of named functions over one lockable store.
pub trait BusinessLogic: Send + Sync + fmt::Debug {
    fn functions(&self) -> &'static [&'static str];

    fn call(
        &self,
        ctx: &mut dyn ContractContext,
        function: &str,
        args: &[u8],
    ) -> Result<Vec<u8>, AppError>;
}

/// Ordinary single-chain call: writes go straight to normal storage.
pub(crate) struct PlainCtx<'a> {
    pub storage: &'a mut LockableContractState,
    pub this: Address,
    pub chain: ChainId,
    pub timestamp: u64,
}

impl ContractContext for PlainCtx<'_> {
    fn this(&self) -> Address {
        self.this
    }

    fn chain(&self) -> ChainId {
        self.chain
    }

    fn read(&mut self, key: &[u8]) -> Result<Vec<u8>, AppError> {
        Ok(self.storage.read(key)?)
    }

    fn write(&mut self, key: &[u8], value: Vec<u8>) -> Result<(), AppError> {
        self.storage.write(key, value, None)?;
        Ok(())
    }

    fn cross_call(&mut self, _call: FunctionCallSpec) -> Result<Vec<u8>, AppError> {
        Err(AppError::NotCrosschain)
    }

    fn block_timestamp(&mut self) -> Result<u64, AppError> {
        Ok(self.timestamp)
    }
}

/// Segment or root execution. Cross calls are answered from the attested
/// child results, in committed order.
pub(crate) struct CrosschainCtx<'a> {
    pub storage: &'a mut LockableContractState,
    pub this: Address,
    pub chain: ChainId,
    pub xtx: XtxRef,
    pub timestamp: u64,
    pub children: &'a [(FunctionCallSpec, Vec<u8>)],
    pub cursor: usize,
    pub wrote: bool,
}

impl CrosschainCtx<'_> {
    /// Fails if the logic returned without making every committed call.
    pub fn finish(&self) -> Result<(), AppError> {
        match self.children.len() - self.cursor {
            0 => Ok(()),
            n => Err(AppError::MissingCalls(n)),
        }
    }
}

impl ContractContext for CrosschainCtx<'_> {
    fn this(&self) -> Address {
        self.this
    }

    fn chain(&self) -> ChainId {
        self.chain
    }

    fn read(&mut self, key: &[u8]) -> Result<Vec<u8>, AppError> {
        Ok(self.storage.read_in_crosschain(key, self.xtx)?)
    }

    fn write(&mut self, key: &[u8], value: Vec<u8>) -> Result<(), AppError> {
        self.storage.write(key, value, Some(self.xtx))?;
        self.wrote = true;
        Ok(())
    }

    fn cross_call(&mut self, actual: FunctionCallSpec) -> Result<Vec<u8>, AppError> {
        let Some((expected, ret)) = self.children.get(self.cursor) else {
            return Err(AppError::UnexpectedCall(actual.to_string()));
        };
        if *expected != actual {
            return Err(AppError::CallMismatch {
                expected: expected.to_string(),
                actual: actual.to_string(),
            });
        }
        self.cursor += 1;
        Ok(ret.clone())
    }

    fn block_timestamp(&mut self) -> Result<u64, AppError> {
        Ok(self.timestamp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::TxId;

    fn spec(f: &str, args: &[u8]) -> FunctionCallSpec {
        FunctionCallSpec::new(ChainId(2), Address::derive("c"), f, args.to_vec())
    }

    fn ctx<'a>(
        storage: &'a mut LockableContractState,
        children: &'a [(FunctionCallSpec, Vec<u8>)],
    ) -> CrosschainCtx<'a> {
        CrosschainCtx {
            storage,
            this: Address::derive("this"),
            chain: ChainId(1),
            xtx: XtxRef {
                root_chain: ChainId(1),
                tx_id: TxId::derive("t"),
            },
            timestamp: 3,
            children,
            cursor: 0,
            wrote: false,
        }
    }

    #[test]
    fn matching_call_returns_attested_value() {
        let mut s = LockableContractState::new();
        let children = [(spec("getPrice", &[]), vec![7])];
        let mut c = ctx(&mut s, &children);
        assert_eq!(c.cross_call(spec("getPrice", &[])).unwrap(), vec![7]);
        assert!(c.finish().is_ok());
    }

    #[test]
    fn one_byte_difference_is_a_mismatch() {
        let mut s = LockableContractState::new();
        let children = [(spec("transfer", &[0, 70]), vec![])];
        let mut c = ctx(&mut s, &children);
        assert!(matches!(
            c.cross_call(spec("transfer", &[0, 71])),
            Err(AppError::CallMismatch { .. })
        ));
    }

    #[test]
    fn over_and_under_consumption() {
        let mut s = LockableContractState::new();
        let children = [(spec("a", &[]), vec![]), (spec("b", &[]), vec![])];
        let mut c = ctx(&mut s, &children);
        c.cross_call(spec("a", &[])).unwrap();
        assert_eq!(c.finish(), Err(AppError::MissingCalls(1)));
        c.cross_call(spec("b", &[])).unwrap();
        assert!(matches!(
            c.cross_call(spec("c", &[])),
            Err(AppError::UnexpectedCall(_))
        ));
        assert!(c.finish().is_ok());
    }

    #[test]
    fn plain_context_refuses_cross_calls() {
        let mut s = LockableContractState::new();
        let mut c = PlainCtx {
            storage: &mut s,
            this: Address::derive("x"),
            chain: ChainId(1),
            timestamp: 0,
        };
        assert_eq!(c.cross_call(spec("a", &[])), Err(AppError::NotCrosschain));
        c.write(b"k", b"v".to_vec()).unwrap();
        assert_eq!(c.read(b"k").unwrap(), b"v");
    }
}
