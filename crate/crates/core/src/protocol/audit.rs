use std::collections::HashSet;

use thiserror::Error;

use crate::registry::Registry;
use crate::types::{Digest, EncodingError, Role};

use super::verify::VerificationReceipt;

/// One traveller on a flight manifest, identified by their token's location.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ManifestEntry {
    pub header_hash: Digest,
    pub record_index: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AuditError {
    #[error("receipt {0} does not carry a valid member signature")]
    BadReceiptSignature(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AuditReport {
    pub missing: Vec<ManifestEntry>,
}

impl AuditReport {
    pub fn is_complete(&self) -> bool {
        self.missing.is_empty()
    }
}

/// Checks that every manifest entry was verified by some registered member.
pub fn audit_manifest(
    receipts: &[VerificationReceipt],
    manifest: &[ManifestEntry],
    registry: &Registry,
) -> Result<AuditReport, AuditError> {
    let mut covered = HashSet::with_capacity(receipts.len());
    for (i, r) in receipts.iter().enumerate() {
        let signed = registry
            .actor(&r.bm_id)
            .filter(|a| a.role == Role::Bm)
            .is_some_and(|a| r.verify(a.public_key.as_bytes()));
        if !signed {
            return Err(AuditError::BadReceiptSignature(i));
        }
        covered.insert(ManifestEntry {
            header_hash: r.token_header_hash,
            record_index: r.record_index,
        });
    }
    Ok(AuditReport {
        missing: manifest
            .iter()
            .filter(|e| !covered.contains(e))
            .copied()
            .collect(),
    })
}

/// Manifest file: one `header_hash_hex record_index` per line.
pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>, EncodingError> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|line| {
            let (hash, index) = line
                .split_once(char::is_whitespace)
                .ok_or(EncodingError::InvalidValue("manifest line"))?;
            Ok(ManifestEntry {
                header_hash: Digest::from_hex(hash)?,
                record_index: index
                    .trim()
                    .parse()
                    .map_err(|_| EncodingError::InvalidValue("manifest record index"))?,
            })
        })
        .collect()
}

impl ManifestEntry {
    pub fn to_line(&self) -> String {
        format!("{} {}", self.header_hash, self.record_index)
    }
}
