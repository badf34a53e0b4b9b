//! Native business contracts for the bundled workloads.
//!
//! Contracts that call other chains keep their peers' locations in normal
//! storage, written once at deployment.

use crate::codec::{decode_u64, encode_u64, ArgReader, Args};
use crate::crypto::Address;
use crate::ids::ChainId;
use crate::protocol::{AppError, BusinessLogic, ContractContext, FunctionCallSpec};

/// Storage encoding of a peer contract location.
pub fn link(chain: ChainId, address: Address) -> Vec<u8> {
    let mut v = chain.0.to_be_bytes().to_vec();
    v.extend_from_slice(&address.0);
    v
}

fn read_link(ctx: &mut dyn ContractContext, key: &[u8]) -> Result<(ChainId, Address), AppError> {
    let raw = ctx.read(key)?;
    if raw.len() != 28 {
        return Err(AppError::Revert(format!(
            "peer {} not configured",
            String::from_utf8_lossy(key)
        )));
    }
    let chain = ChainId(u64::from_be_bytes(raw[..8].try_into().expect("8 bytes")));
    let addr = Address(raw[8..].try_into().expect("20 bytes"));
    Ok((chain, addr))
}

fn call_peer(
    ctx: &mut dyn ContractContext,
    key: &[u8],
    function: &str,
    args: Vec<u8>,
) -> Result<Vec<u8>, AppError> {
    let (chain, contract) = read_link(ctx, key)?;
    ctx.cross_call(FunctionCallSpec::new(chain, contract, function, args))
}

fn read_u64(ctx: &mut dyn ContractContext, key: &[u8]) -> Result<u64, AppError> {
    Ok(decode_u64(&ctx.read(key)?)?)
}

pub fn balance_key(account: Address) -> Vec<u8> {
    let mut k = b"balance/".to_vec();
    k.extend_from_slice(&account.0);
    k
}

pub fn stock_key(account: Address) -> Vec<u8> {
    let mut k = b"stock/".to_vec();
    k.extend_from_slice(&account.0);
    k
}

fn unknown(function: &str) -> AppError {
    AppError::UnknownFunction(function.to_string())
}

/// Holds a number other chains read.
#[derive(Debug)]
pub struct ValueHolder;

impl BusinessLogic for ValueHolder {
    fn functions(&self) -> &'static [&'static str] {
        &["get", "set"]
    }

    fn call(
        &self,
        ctx: &mut dyn ContractContext,
        function: &str,
        args: &[u8],
    ) -> Result<Vec<u8>, AppError> {
        match function {
            "get" => ctx.read(b"value"),
            "set" => {
                let v = ArgReader::parse(args)?.u64()?;
                ctx.write(b"value", encode_u64(v))?;
                Ok(Vec::new())
            }
            f => Err(unknown(f)),
        }
    }
}

/// Reads a remote value and keeps a copy.
#[derive(Debug)]
pub struct Store;

impl BusinessLogic for Store {
    fn functions(&self) -> &'static [&'static str] {
        &["readAndStore"]
    }

    fn call(
        &self,
        ctx: &mut dyn ContractContext,
        function: &str,
        _args: &[u8],
    ) -> Result<Vec<u8>, AppError> {
        match function {
            "readAndStore" => {
                let v = call_peer(ctx, b"source", "get", Args::new().encode())?;
                ctx.write(b"stored", v.clone())?;
                Ok(v)
            }
            f => Err(unknown(f)),
        }
    }
}

/// Pushes its local value to a remote holder.
#[derive(Debug)]
pub struct Source;

impl BusinessLogic for Source {
    fn functions(&self) -> &'static [&'static str] {
        &["writeRemote"]
    }

    fn call(
        &self,
        ctx: &mut dyn ContractContext,
        function: &str,
        _args: &[u8],
    ) -> Result<Vec<u8>, AppError> {
        match function {
            "writeRemote" => {
                let v = read_u64(ctx, b"value")?;
                call_peer(ctx, b"target", "set", Args::new().u64(v).encode())
            }
            f => Err(unknown(f)),
        }
    }
}

/// Trade entry point held by the buyer's wallet.
#[derive(Debug)]
pub struct TradeWallet;

impl BusinessLogic for TradeWallet {
    fn functions(&self) -> &'static [&'static str] {
        &["executeTrade"]
    }

    fn call(
        &self,
        ctx: &mut dyn ContractContext,
        function: &str,
        args: &[u8],
    ) -> Result<Vec<u8>, AppError> {
        match function {
            "executeTrade" => call_peer(ctx, b"terms", "shipment", args.to_vec()),
            f => Err(unknown(f)),
        }
    }
}

/// Trade terms: price the shipment, move money, move goods.
#[derive(Debug)]
pub struct Terms;

impl BusinessLogic for Terms {
    fn functions(&self) -> &'static [&'static str] {
        &["shipment"]
    }

    fn call(
        &self,
        ctx: &mut dyn ContractContext,
        function: &str,
        args: &[u8],
    ) -> Result<Vec<u8>, AppError> {
        match function {
            "shipment" => {
                let mut a = ArgReader::parse(args)?;
                let (buyer, seller, qty) = (a.address()?, a.address()?, a.u64()?);
                let price = decode_u64(&call_peer(
                    ctx,
                    b"oracle",
                    "getPrice",
                    Args::new().encode(),
                )?)?;
                let amount = price
                    .checked_mul(qty)
                    .ok_or_else(|| AppError::Revert("amount overflow".into()))?;
                call_peer(
                    ctx,
                    b"balances",
                    "transfer",
                    Args::new()
                        .address(buyer)
                        .address(seller)
                        .u64(amount)
                        .encode(),
                )?;
                call_peer(
                    ctx,
                    b"stock",
                    "delivery",
                    Args::new().address(seller).address(buyer).u64(qty).encode(),
                )?;
                Ok(encode_u64(amount))
            }
            f => Err(unknown(f)),
        }
    }
}

#[derive(Debug)]
pub struct PriceOracle;

impl BusinessLogic for PriceOracle {
    fn functions(&self) -> &'static [&'static str] {
        &["getPrice"]
    }

    fn call(
        &self,
        ctx: &mut dyn ContractContext,
        function: &str,
        _args: &[u8],
    ) -> Result<Vec<u8>, AppError> {
        match function {
            "getPrice" => Ok(encode_u64(read_u64(ctx, b"price")?)),
            f => Err(unknown(f)),
        }
    }
}

fn move_units(
    ctx: &mut dyn ContractContext,
    key: fn(Address) -> Vec<u8>,
    args: &[u8],
) -> Result<Vec<u8>, AppError> {
    let mut a = ArgReader::parse(args)?;
    let (from, to, amount) = (a.address()?, a.address()?, a.u64()?);
    let have = read_u64(ctx, &key(from))?;
    if have < amount {
        return Err(AppError::Revert(format!("insufficient: {have} < {amount}")));
    }
    let theirs = read_u64(ctx, &key(to))?;
    ctx.write(&key(from), encode_u64(have - amount))?;
    ctx.write(&key(to), encode_u64(theirs + amount))?;
    Ok(Vec::new())
}

#[derive(Debug)]
pub struct Balances;

impl BusinessLogic for Balances {
    fn functions(&self) -> &'static [&'static str] {
        &["transfer"]
    }

    fn call(
        &self,
        ctx: &mut dyn ContractContext,
        function: &str,
        args: &[u8],
    ) -> Result<Vec<u8>, AppError> {
        match function {
            "transfer" => move_units(ctx, balance_key, args),
            f => Err(unknown(f)),
        }
    }
}

#[derive(Debug)]
pub struct Stock;

impl BusinessLogic for Stock {
    fn functions(&self) -> &'static [&'static str] {
        &["delivery"]
    }

    fn call(
        &self,
        ctx: &mut dyn ContractContext,
        function: &str,
        args: &[u8],
    ) -> Result<Vec<u8>, AppError> {
        match function {
            "delivery" => move_units(ctx, stock_key, args),
            f => Err(unknown(f)),
        }
    }
}

/// One side of the cross-locking pair: bumps itself, then touches its peer.
#[derive(Debug)]
pub struct Counter;

impl BusinessLogic for Counter {
    fn functions(&self) -> &'static [&'static str] {
        &["bump", "touch"]
    }

    fn call(
        &self,
        ctx: &mut dyn ContractContext,
        function: &str,
        _args: &[u8],
    ) -> Result<Vec<u8>, AppError> {
        match function {
            "bump" => {
                let v = read_u64(ctx, b"value")?;
                ctx.write(b"value", encode_u64(v + 1))?;
                call_peer(ctx, b"peer", "touch", Args::new().encode())?;
                Ok(Vec::new())
            }
            "touch" => {
                let v = read_u64(ctx, b"value")?;
                ctx.write(b"value", encode_u64(v + 1))?;
                Ok(Vec::new())
            }
            f => Err(unknown(f)),
        }
    }
}

/// Its result depends on when it runs, so no call tree can be committed for it.
#[derive(Debug)]
pub struct Clock;

impl BusinessLogic for Clock {
    fn functions(&self) -> &'static [&'static str] {
        &["stampRemote"]
    }

    fn call(
        &self,
        ctx: &mut dyn ContractContext,
        function: &str,
        _args: &[u8],
    ) -> Result<Vec<u8>, AppError> {
        match function {
            "stampRemote" => {
                let now = ctx.block_timestamp()?;
                call_peer(ctx, b"target", "set", Args::new().u64(now).encode())
            }
            f => Err(unknown(f)),
        }
    }
}
