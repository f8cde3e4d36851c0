//! The replicated health-passport ledger.
//!
//! Blocks are produced by health service authorities in a fixed round-robin by
//! height and commit to their records through a Merkle root. Records inside a
//! block are ordered by commitment bytes, so the proposer has no say over
//! ordering and every node derives the same root.

mod block;
mod chain;
pub mod merkle;

pub use block::{header_hash, Block, BlockHeader, DhpToken, HEADER_TAG};
pub use chain::{
    fork_choice, propose_block, scheduled_authority, validate_block, ChainState, RecordLocation,
};
pub use merkle::merkle_root;

use thiserror::Error;

use crate::types::{Commitment, Digest, MemberId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LedgerConfig {
    pub max_block_records: usize,
    /// How far a block may run ahead of the validating node's clock.
    pub clock_skew_secs: u64,
}

impl Default for LedgerConfig {
    fn default() -> Self {
        Self {
            max_block_records: 1024,
            clock_skew_secs: 300,
        }
    }
}

/// Reasons a block is rejected, reported in check order.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    #[error("wrong height: expected {expected}, got {got}")]
    WrongHeight { expected: u64, got: u64 },
    #[error("previous hash does not match the tip")]
    BadPrevHash,
    #[error("block authority {got} is not scheduled (expected {expected})")]
    WrongAuthority { expected: MemberId, got: MemberId },
    #[error("authority signature does not verify")]
    BadAuthoritySig,
    #[error("merkle root does not match the block body")]
    BadMerkleRoot,
    #[error("block carries {0} records")]
    BadRecordCount(usize),
    #[error("record {index} issued by unregistered facility {issuer}")]
    UnknownIssuer { index: usize, issuer: MemberId },
    #[error("record {index} issuer signature does not verify")]
    BadRecordSig { index: usize },
    #[error("record {index} breaks canonical commitment ordering")]
    BadOrdering { index: usize },
    #[error("bad timestamp: {0}")]
    BadTimestamp(String),
    #[error("record {index} commitment {commitment} is already on chain")]
    DuplicateRecord { index: usize, commitment: Commitment },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("authority set is empty")]
    EmptyAuthoritySet,
    #[error("{0} is not scheduled to propose this height")]
    NotScheduled(MemberId),
    #[error("nothing to propose")]
    EmptyBatch,
    #[error("batch of {got} exceeds the {max} record limit")]
    BatchTooLarge { got: usize, max: usize },
    #[error("pending record {0} is not a valid signed record")]
    InvalidPendingRecord(usize),
    #[error("genesis block does not match the consortium configuration")]
    InvalidGenesis,
    #[error("no candidate chain")]
    NoValidCandidate,
    #[error("block {height} ({hash}): {source}")]
    Invalid {
        height: u64,
        hash: Digest,
        #[source]
        source: ValidationError,
    },
    #[error(transparent)]
    Validation(#[from] ValidationError),
}

/// Why a token failed to resolve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum LookupError {
    #[error("no record at the token's location")]
    NotFound,
    #[error("record does not open with the presented document")]
    CommitmentMismatch,
}
