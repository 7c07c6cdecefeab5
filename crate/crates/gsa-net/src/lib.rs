//! Wire-level realization of the two-round aggregation protocol: one server,
//! `k` TCP clients, length-prefixed binary frames, dropout injection, and
//! round timing.
//!
//! Keys and the scheme fixture are distributed as files beforehand; the wire
//! carries exactly the two protocol rounds plus the survivor announcement
//! and the result. Links are treated as error-free and the only adversary in
//! the model is the curious server itself, so there is no transport
//! security layer.

pub mod bench;
pub mod client;
pub mod config;
pub mod frame;
pub mod server;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("timed out waiting for {0}")]
    Timeout(&'static str),
    #[error("only {got} survivors after {round}, need at least {need}")]
    TooFewSurvivors {
        round: &'static str,
        got: usize,
        need: usize,
    },
    #[error("server aborted: {0}")]
    ServerAbort(String),
    #[error("scheme: {0}")]
    Scheme(#[from] gsa_core::rounds::SchemeError),
    #[error("fixture: {0}")]
    Fixture(#[from] gsa_core::fixture::FixtureError),
    #[error("config: {0}")]
    Config(String),
}
