//! Library half of the `spuf` binary: the wire codec and the TCP
//! verifier/prover endpoints, kept linkable so integration tests can drive
//! sessions in-process.

pub mod prover;
pub mod server;
pub mod wire;
