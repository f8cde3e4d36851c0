//! Digital health passports on a proof-of-authority permissioned ledger.
//!
//! Testing facilities sign passports, health service authorities batch them
//! into blocks, and read-only consortium members verify them against a
//! destination's entry policy using a token the traveller presents.

pub mod crypto;
pub mod ledger;
pub mod netsim;
pub mod protocol;
pub mod registry;
pub mod service;
pub mod types;

pub use crypto::{commit, keygen, sign, verify_sig, KeyPair, Salt};
pub use ledger::{Block, BlockHeader, ChainState, DhpToken, LedgerConfig};
pub use registry::Registry;
pub use types::{
    ActorId, Commitment, Digest, HealthPassport, HygienePolicy, MemberId, PublicKey, Role, TestMethod,
    Timestamp, TravelDocument,
};
