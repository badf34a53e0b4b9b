pub mod attestation;
pub mod chain_sim;
pub mod check;
pub mod codec;
pub mod config;
pub mod crypto;
pub mod engine;
pub mod ids;
pub mod merkle;
pub mod protocol;
pub mod scenarios;
pub mod storage;
