//! Node daemon: persistence, wire protocol, and the TCP front end.
//!
//! [`Node`] holds a member's replicated chain and serves requests through
//! [`Node::handle`], independent of transport. [`Server`] and [`Client`]
//! carry those requests over TCP after a challenge-response handshake with
//! consortium keys.

mod config;
mod net;
mod node;
pub mod storage;
pub mod wire;

pub use config::{NodeConfig, NodeRole, DATA_DIR_ENV};
pub use net::{run_node, serve_connection, sync_with_peer, Client, Server};
pub use node::{Node, MAX_BLOCKS_PER_RESPONSE};
pub use storage::{
    audit_block_log, expected_genesis, read_block_log, read_receipts, BlockLog, LogError, ReceiptLog, Recovered,
};
pub use wire::{ErrorKind, Request, Response};

use thiserror::Error;

use crate::crypto::CryptoError;
use crate::registry::RegistryError;
use crate::types::EncodingError;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("config: {0}")]
    Config(String),
    #[error("registry: {0}")]
    Registry(#[from] RegistryError),
    #[error("key: {0}")]
    Crypto(#[from] CryptoError),
    #[error("malformed message: {0}")]
    Encoding(#[from] EncodingError),
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("{kind:?}: {message}")]
    Refused { kind: ErrorKind, message: String },
}
