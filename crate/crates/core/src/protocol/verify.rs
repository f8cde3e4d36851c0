use std::fmt;

use crate::crypto::{hash_parts, verify_sig, KeyPair};
use crate::ledger::{ChainState, DhpToken, LookupError, RecordLocation};
use crate::types::{
    Digest, EncodingError, HygienePolicy, MemberId, Reader, Role, Signature, Timestamp,
    TravelDocument,
};

use super::policy::{check_policy, ViolationReason};
use super::ProtocolError;

const RECEIPT_TAG: &[u8] = b"DHPRC1|";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OutcomeStatus {
    Valid,
    NotFound,
    CommitmentMismatch,
    BadIssuerSignature,
    UnknownIssuer,
    PolicyViolation,
}

impl OutcomeStatus {
    pub fn code(self) -> u8 {
        match self {
            OutcomeStatus::Valid => 0,
            OutcomeStatus::NotFound => 1,
            OutcomeStatus::CommitmentMismatch => 2,
            OutcomeStatus::BadIssuerSignature => 3,
            OutcomeStatus::UnknownIssuer => 4,
            OutcomeStatus::PolicyViolation => 5,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => OutcomeStatus::Valid,
            1 => OutcomeStatus::NotFound,
            2 => OutcomeStatus::CommitmentMismatch,
            3 => OutcomeStatus::BadIssuerSignature,
            4 => OutcomeStatus::UnknownIssuer,
            5 => OutcomeStatus::PolicyViolation,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            OutcomeStatus::Valid => "Valid",
            OutcomeStatus::NotFound => "NotFound",
            OutcomeStatus::CommitmentMismatch => "CommitmentMismatch",
            OutcomeStatus::BadIssuerSignature => "BadIssuerSignature",
            OutcomeStatus::UnknownIssuer => "UnknownIssuer",
            OutcomeStatus::PolicyViolation => "PolicyViolation",
        }
    }
}

impl fmt::Display for OutcomeStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Result of one verification. `violation` is set exactly when the status is
/// `PolicyViolation`; `location` exactly when the record was found.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VerificationOutcome {
    pub status: OutcomeStatus,
    pub violation: Option<ViolationReason>,
    pub location: Option<RecordLocation>,
    pub checked_at: Timestamp,
}

impl VerificationOutcome {
    pub fn is_valid(&self) -> bool {
        self.status == OutcomeStatus::Valid
    }

    fn failed(status: OutcomeStatus, location: Option<RecordLocation>, at: Timestamp) -> Self {
        Self {
            status,
            violation: None,
            location,
            checked_at: at,
        }
    }
}

impl fmt::Display for VerificationOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.violation {
            Some(v) => write!(f, "{}/{}", self.status, v.name()),
            None => write!(f, "{}", self.status),
        }
    }
}

/// Evidence, signed by the verifying member, that a check took place.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct VerificationReceipt {
    pub bm_id: MemberId,
    pub token_header_hash: Digest,
    pub record_index: u32,
    pub outcome_status: OutcomeStatus,
    pub checked_at: Timestamp,
    pub bm_signature: Signature,
}

impl VerificationReceipt {
    pub const ENCODED_LEN: usize = 7 + 16 + 32 + 4 + 1 + 8 + 64;

    /// `"DHPRC1|" ‖ bm ‖ header hash ‖ u32 index ‖ status ‖ u64 checked_at`.
    pub fn signing_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(Self::ENCODED_LEN - 64);
        out.extend_from_slice(RECEIPT_TAG);
        out.extend_from_slice(self.bm_id.as_bytes());
        out.extend_from_slice(self.token_header_hash.as_bytes());
        out.extend_from_slice(&self.record_index.to_be_bytes());
        out.push(self.outcome_status.code());
        out.extend_from_slice(&self.checked_at.0.to_be_bytes());
        out
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = self.signing_bytes();
        out.extend_from_slice(self.bm_signature.as_bytes());
        out
    }

    pub fn from_canonical_bytes(bytes: &[u8]) -> Result<Self, EncodingError> {
        let mut r = Reader::new(bytes);
        if r.take(RECEIPT_TAG.len())? != RECEIPT_TAG {
            return Err(EncodingError::BadTag);
        }
        let receipt = Self {
            bm_id: MemberId(r.array()?),
            token_header_hash: Digest(r.array()?),
            record_index: r.u32()?,
            outcome_status: OutcomeStatus::from_code(r.u8()?)
                .ok_or(EncodingError::InvalidValue("outcome status"))?,
            checked_at: Timestamp(r.u64()?),
            bm_signature: Signature(r.array()?),
        };
        r.finish()?;
        Ok(receipt)
    }

    /// Short identifier: first 8 bytes of the hash of the signed receipt.
    pub fn receipt_id(&self) -> String {
        hex::encode(&hash_parts(&[&self.canonical_bytes()]).0[..8])
    }

    pub fn verify(&self, bm_public: &[u8]) -> bool {
        verify_sig(bm_public, &self.signing_bytes(), self.bm_signature.as_bytes())
    }

    pub fn sign(bm: &KeyPair, token: &DhpToken, status: OutcomeStatus, at: Timestamp) -> Self {
        let mut r = Self {
            bm_id: bm.id(),
            token_header_hash: token.header_hash,
            record_index: token.record_index,
            outcome_status: status,
            checked_at: at,
            bm_signature: Signature([0; 64]),
        };
        r.bm_signature = bm.sign(&r.signing_bytes());
        r
    }
}

/// Locate, attribute, authenticate, then apply the entry policy. The first
/// failing stage decides the status. Every call yields a signed receipt.
pub fn bm_verify(
    bm: &KeyPair,
    state: &ChainState,
    token: &DhpToken,
    doc: &TravelDocument,
    policy: &HygienePolicy,
    at: Timestamp,
) -> Result<(VerificationOutcome, VerificationReceipt), ProtocolError> {
    if bm.role() != Role::Bm {
        return Err(ProtocolError::NotABlockchainMember(bm.role()));
    }
    let outcome = evaluate(state, token, doc, policy, at);
    let receipt = VerificationReceipt::sign(bm, token, outcome.status, at);
    Ok((outcome, receipt))
}

fn evaluate(
    state: &ChainState,
    token: &DhpToken,
    doc: &TravelDocument,
    policy: &HygienePolicy,
    at: Timestamp,
) -> VerificationOutcome {
    let (location, record) = match state.lookup_by_token(token, doc) {
        Ok(found) => found,
        Err(LookupError::NotFound) => {
            return VerificationOutcome::failed(OutcomeStatus::NotFound, None, at)
        }
        Err(LookupError::CommitmentMismatch) => {
            let loc = state
                .block_by_hash(&token.header_hash)
                .map(|b| RecordLocation {
                    height: b.header.height,
                    index: token.record_index,
                });
            return VerificationOutcome::failed(OutcomeStatus::CommitmentMismatch, loc, at);
        }
    };
    let Some(issuer) = state.issuer(&record.issuer) else {
        return VerificationOutcome::failed(OutcomeStatus::UnknownIssuer, Some(location), at);
    };
    if !verify_sig(
        issuer.public_key.as_bytes(),
        &record.signing_bytes(),
        record.issuer_signature.as_bytes(),
    ) {
        return VerificationOutcome::failed(OutcomeStatus::BadIssuerSignature, Some(location), at);
    }
    match check_policy(record, policy, at) {
        Ok(()) => VerificationOutcome {
            status: OutcomeStatus::Valid,
            violation: None,
            location: Some(location),
            checked_at: at,
        },
        Err(reason) => VerificationOutcome {
            status: OutcomeStatus::PolicyViolation,
            violation: Some(reason),
            location: Some(location),
            checked_at: at,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{keygen, Salt};
    use crate::ledger::LedgerConfig;
    use crate::protocol::{hsa_register, thf_issue};
    use crate::types::TestMethod;
    use chrono::NaiveDate;

    const NOW: Timestamp = Timestamp(1_700_000_000);
    const H: u64 = 3600;

    struct World {
        bm: KeyPair,
        state: ChainState,
        tokens: Vec<DhpToken>,
        docs: Vec<TravelDocument>,
    }

    fn world(tested_ago: &[u64]) -> World {
        let hsa = keygen(Role::Hsa, Some([1; 32]));
        let thf = keygen(Role::Thf, Some([2; 32]));
        let bm = keygen(Role::Bm, Some([3; 32]));
        let mut state = ChainState::new(
            vec![hsa.owner().clone()],
            [thf.owner().clone()],
            NOW.minus(30 * 24 * H),
            LedgerConfig::default(),
        )
        .unwrap();
        let docs: Vec<_> = (0..tested_ago.len())
            .map(|n| {
                TravelDocument::new(format!("PX{n:05}"), "ITA", NaiveDate::from_ymd_opt(2031, 1, 1).unwrap())
                    .unwrap()
            })
            .collect();
        let pending: Vec<_> = docs
            .iter()
            .zip(tested_ago)
            .map(|(d, ago)| {
                thf_issue(&thf, d, true, TestMethod::new("RT-qPCR").unwrap(), NOW.minus(*ago), NOW).unwrap()
            })
            .collect();
        let tokens = hsa_register(&hsa, &mut state, &pending, NOW).unwrap();
        World { bm, state, tokens, docs }
    }

    #[test]
    fn fresh_passport_is_valid() {
        let w = world(&[2 * H]);
        let p = HygienePolicy::default();
        let (out, receipt) = bm_verify(&w.bm, &w.state, &w.tokens[0], &w.docs[0], &p, NOW).unwrap();
        assert_eq!(out.status, OutcomeStatus::Valid);
        assert_eq!(out.location.unwrap().height, 1);
        assert_eq!(receipt.outcome_status, out.status);
        assert!(receipt.verify(w.bm.public().as_bytes()));
    }

    #[test]
    fn someone_elses_document_is_a_mismatch() {
        let w = world(&[H, H]);
        let p = HygienePolicy::default();
        let (out, _) = bm_verify(&w.bm, &w.state, &w.tokens[0], &w.docs[1], &p, NOW).unwrap();
        assert_eq!(out.status, OutcomeStatus::CommitmentMismatch);
        assert!(out.violation.is_none());
    }

    #[test]
    fn stale_test_is_a_policy_violation() {
        let w = world(&[73 * H]);
        let p = HygienePolicy::default();
        let (out, receipt) = bm_verify(&w.bm, &w.state, &w.tokens[0], &w.docs[0], &p, NOW).unwrap();
        assert_eq!(out.status, OutcomeStatus::PolicyViolation);
        assert_eq!(out.violation, Some(ViolationReason::TestTooOld));
        assert_eq!(receipt.outcome_status, OutcomeStatus::PolicyViolation);
    }

    #[test]
    fn unknown_location_is_not_found() {
        let w = world(&[H]);
        let p = HygienePolicy::default();
        let mut t = w.tokens[0];
        t.header_hash = Digest([0xEE; 32]);
        let (out, receipt) = bm_verify(&w.bm, &w.state, &t, &w.docs[0], &p, NOW).unwrap();
        assert_eq!(out.status, OutcomeStatus::NotFound);
        assert!(out.location.is_none());
        assert_eq!(receipt.outcome_status, OutcomeStatus::NotFound);
        let mut t = w.tokens[0];
        t.record_index = 5;
        assert_eq!(
            bm_verify(&w.bm, &w.state, &t, &w.docs[0], &p, NOW).unwrap().0.status,
            OutcomeStatus::NotFound
        );
        let mut t = w.tokens[0];
        t.salt = Salt([0; 16]);
        assert_eq!(
            bm_verify(&w.bm, &w.state, &t, &w.docs[0], &p, NOW).unwrap().0.status,
            OutcomeStatus::CommitmentMismatch
        );
    }

    #[test]
    fn only_members_may_verify() {
        let w = world(&[H]);
        let hsa = keygen(Role::Hsa, Some([1; 32]));
        let p = HygienePolicy::default();
        assert_eq!(
            bm_verify(&hsa, &w.state, &w.tokens[0], &w.docs[0], &p, NOW).unwrap_err(),
            ProtocolError::NotABlockchainMember(Role::Hsa)
        );
    }

    #[test]
    fn receipt_bytes_round_trip() {
        let w = world(&[H]);
        let (_, r) = bm_verify(&w.bm, &w.state, &w.tokens[0], &w.docs[0], &HygienePolicy::default(), NOW).unwrap();
        let bytes = r.canonical_bytes();
        assert_eq!(bytes.len(), VerificationReceipt::ENCODED_LEN);
        assert_eq!(VerificationReceipt::from_canonical_bytes(&bytes).unwrap(), r);
        assert_eq!(r.receipt_id().len(), 16);
    }
}
