//! Merkle root over a block's records.
//!
//! - leaf: `H("LEAF|" ‖ dhp_signing_bytes ‖ issuer_signature)`
//! - node: `H("NODE|" ‖ left ‖ right)`, duplicating the last node of odd layers
//! - empty: `H("EMPTY|")`

use crate::crypto::hash_parts;
use crate::types::{Digest, HealthPassport};

pub const LEAF_TAG: &[u8] = b"LEAF|";
pub const NODE_TAG: &[u8] = b"NODE|";
pub const EMPTY_TAG: &[u8] = b"EMPTY|";

pub fn leaf_hash(record: &HealthPassport) -> Digest {
    hash_parts(&[
        LEAF_TAG,
        &record.signing_bytes(),
        record.issuer_signature.as_bytes(),
    ])
}

pub fn node_hash(left: &Digest, right: &Digest) -> Digest {
    hash_parts(&[NODE_TAG, left.as_bytes(), right.as_bytes()])
}

pub fn empty_root() -> Digest {
    hash_parts(&[EMPTY_TAG])
}

pub fn merkle_root(records: &[HealthPassport]) -> Digest {
    if records.is_empty() {
        return empty_root();
    }
    let mut layer: Vec<Digest> = records.iter().map(leaf_hash).collect();
    while layer.len() > 1 {
        layer = layer
            .chunks(2)
            .map(|pair| match pair {
                [l, r] => node_hash(l, r),
                [only] => node_hash(only, only),
                _ => unreachable!(),
            })
            .collect();
    }
    layer[0]
}
