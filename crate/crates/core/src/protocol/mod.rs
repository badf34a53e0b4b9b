//! Protocol data model and the crosschain control contract.

mod context;
pub mod control;
mod types;

pub use context::{AppError, BusinessLogic, ContractContext};
pub(crate) use context::{CrosschainCtx, PlainCtx};
pub use control::ControlError;
pub use types::*;
