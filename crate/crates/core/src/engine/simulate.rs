use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use crate::chain_sim::World;
use crate::crypto::Address;
use crate::ids::{ChainId, TxId, XtxRef};
use crate::protocol::{AppError, CallExecutionTree, ContractContext, FunctionCallSpec};
use crate::storage::StorageError;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimulateError {
    #[error("simulation touched a contract locked by another crosschain transaction")]
    Locked,
    #[error("nondeterministic call tree: {0}")]
    Nondeterministic(&'static str),
    #[error("simulation failed: {0}")]
    Failed(AppError),
}

impl From<AppError> for SimulateError {
    fn from(e: AppError) -> Self {
        match e {
            AppError::Storage(StorageError::Locked(_)) => SimulateError::Locked,
            AppError::Nondeterministic(what) => SimulateError::Nondeterministic(what),
            other => SimulateError::Failed(other),
        }
    }
}

/// Dry-runs `entry` against a private copy of every chain and records each
/// cross call it would make, yielding the committed call tree.
pub fn simulate_tree(
    worlds: &BTreeMap<ChainId, World>,
    entry: FunctionCallSpec,
) -> Result<CallExecutionTree, SimulateError> {
    let mut mirror = worlds.clone();
    let (_, tree) = run_node(&mut mirror, entry)?;
    Ok(tree)
}

fn sim_context() -> XtxRef {
    XtxRef {
        root_chain: ChainId(u64::MAX),
        tx_id: TxId::derive("simulation"),
    }
}

fn run_node(
    mirror: &mut BTreeMap<ChainId, World>,
    spec: FunctionCallSpec,
) -> Result<(Vec<u8>, CallExecutionTree), AppError> {
    let logic = {
        let world = mirror
            .get(&spec.chain)
            .ok_or(AppError::UnknownContract(spec.contract, spec.chain))?;
        let contract = world
            .contracts
            .get(&spec.contract)
            .ok_or(AppError::UnknownContract(spec.contract, spec.chain))?;
        if !contract.logic.functions().contains(&spec.function.as_str()) {
            return Err(AppError::UnknownFunction(spec.function.clone()));
        }
        Arc::clone(&contract.logic)
    };
    let mut ctx = SimCtx {
        mirror,
        chain: spec.chain,
        this: spec.contract,
        children: Vec::new(),
    };
    let ret = logic.call(&mut ctx, &spec.function, &spec.args)?;
    let children = ctx.children;
    Ok((
        ret,
        CallExecutionTree {
            node: spec,
            children,
        },
    ))
}

struct SimCtx<'a> {
    mirror: &'a mut BTreeMap<ChainId, World>,
    chain: ChainId,
    this: Address,
    children: Vec<CallExecutionTree>,
}

impl SimCtx<'_> {
    fn storage(&mut self) -> &mut crate::storage::LockableContractState {
        &mut self
            .mirror
            .get_mut(&self.chain)
            .and_then(|w| w.contracts.get_mut(&self.this))
            .expect("contract resolved before execution")
            .storage
    }
}

impl ContractContext for SimCtx<'_> {
    fn this(&self) -> Address {
        self.this
    }

    fn chain(&self) -> ChainId {
        self.chain
    }

    fn read(&mut self, key: &[u8]) -> Result<Vec<u8>, AppError> {
        Ok(self.storage().read_in_crosschain(key, sim_context())?)
    }

    fn write(&mut self, key: &[u8], value: Vec<u8>) -> Result<(), AppError> {
        self.storage().write(key, value, Some(sim_context()))?;
        Ok(())
    }

    fn cross_call(&mut self, call: FunctionCallSpec) -> Result<Vec<u8>, AppError> {
        let (ret, subtree) = run_node(self.mirror, call)?;
        self.children.push(subtree);
        Ok(ret)
    }

    fn block_timestamp(&mut self) -> Result<u64, AppError> {
        Err(AppError::Nondeterministic("block timestamp read"))
    }
}
