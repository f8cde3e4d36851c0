use rand::{CryptoRng, RngCore};

use crate::crypto::{commit, KeyPair, Salt};
use crate::ledger::{propose_block, ChainState, DhpToken};
use crate::types::{
    EncodingError, HealthPassport, MemberId, Reader, Role, Signature, TestMethod, Timestamp,
    TravelDocument,
};

use super::ProtocolError;

const PENDING_TAG: &[u8] = b"DHPP1|";

/// A signed passport on its way from the facility to an authority, together
/// with the salt the authority hands back inside the traveller's token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PendingDhp {
    pub record: HealthPassport,
    pub salt: Salt,
}

impl PendingDhp {
    pub fn thf_id(&self) -> MemberId {
        self.record.issuer
    }

    /// `"DHPP1|" ‖ record ‖ salt`.
    pub fn to_frame(&self) -> Vec<u8> {
        let mut out = PENDING_TAG.to_vec();
        out.extend_from_slice(&self.record.canonical_bytes());
        out.extend_from_slice(self.salt.as_bytes());
        out
    }

    pub fn from_frame(bytes: &[u8]) -> Result<Self, EncodingError> {
        let mut r = Reader::new(bytes);
        if r.take(PENDING_TAG.len())? != PENDING_TAG {
            return Err(EncodingError::BadTag);
        }
        let record = HealthPassport::read(&mut r)?;
        let salt = Salt(r.array()?);
        r.finish()?;
        Ok(Self { record, salt })
    }
}

pub fn thf_issue(
    thf: &KeyPair,
    doc: &TravelDocument,
    result: bool,
    method: TestMethod,
    tested_at: Timestamp,
    now: Timestamp,
) -> Result<PendingDhp, ProtocolError> {
    thf_issue_with_rng(thf, doc, result, method, tested_at, now, &mut rand::rngs::OsRng)
}

/// [`thf_issue`] with a caller-supplied salt source.
pub fn thf_issue_with_rng<R: RngCore + CryptoRng>(
    thf: &KeyPair,
    doc: &TravelDocument,
    result: bool,
    method: TestMethod,
    tested_at: Timestamp,
    now: Timestamp,
    rng: &mut R,
) -> Result<PendingDhp, ProtocolError> {
    if thf.role() != Role::Thf {
        return Err(ProtocolError::NotAuthorizedIssuer(thf.role()));
    }
    if !result {
        return Err(ProtocolError::NotRiskFree);
    }
    if tested_at > now {
        return Err(ProtocolError::FutureTimestamp);
    }
    let salt = Salt::random_with(rng);
    let mut record = HealthPassport {
        commitment: commit(doc, &salt),
        result,
        tested_at,
        method,
        issuer: thf.id(),
        issuer_signature: Signature([0; 64]),
    };
    record.issuer_signature = thf.sign(&record.signing_bytes());
    Ok(PendingDhp { record, salt })
}

/// Packs `pending` into one block, appends it, and returns one token per
/// input in input order. Positions refer to the block's canonical order.
pub fn hsa_register(
    hsa: &KeyPair,
    state: &mut ChainState,
    pending: &[PendingDhp],
    now: Timestamp,
) -> Result<Vec<DhpToken>, ProtocolError> {
    let records: Vec<HealthPassport> = pending.iter().map(|p| p.record.clone()).collect();
    let block = propose_block(state, &records, hsa, now)?;
    let header_hash = block.hash();
    let tokens = pending
        .iter()
        .map(|p| {
            let pos = block
                .records
                .binary_search_by(|r| r.commitment.cmp(&p.record.commitment))
                .expect("every pending record is in the block");
            DhpToken {
                header_hash,
                record_index: pos as u32,
                salt: p.salt,
            }
        })
        .collect();
    state
        .append_block(block, now)
        .map_err(crate::ledger::LedgerError::from)?;
    Ok(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{keygen, verify_sig};
    use crate::ledger::{LedgerConfig, LedgerError};
    use chrono::NaiveDate;
    use rand::SeedableRng;

    const NOW: Timestamp = Timestamp(1_700_000_000);

    fn doc(n: u32) -> TravelDocument {
        TravelDocument::new(format!("TR{n:06}"), "DEU", NaiveDate::from_ymd_opt(2030, 3, 3).unwrap())
            .unwrap()
    }

    fn pcr() -> TestMethod {
        TestMethod::new("RT-qPCR").unwrap()
    }

    #[test]
    fn issued_record_is_signed_and_opens_with_doc() {
        let thf = keygen(Role::Thf, Some([1; 32]));
        let p = thf_issue(&thf, &doc(1), true, pcr(), NOW.minus(3600), NOW).unwrap();
        assert!(verify_sig(
            thf.public().as_bytes(),
            &p.record.signing_bytes(),
            p.record.issuer_signature.as_bytes()
        ));
        assert_eq!(commit(&doc(1), &p.salt), p.record.commitment);
        assert_eq!(p.thf_id(), thf.id());
        assert_eq!(PendingDhp::from_frame(&p.to_frame()).unwrap(), p);
    }

    #[test]
    fn issuance_preconditions() {
        let thf = keygen(Role::Thf, Some([1; 32]));
        let bm = keygen(Role::Bm, Some([2; 32]));
        assert_eq!(
            thf_issue(&thf, &doc(1), false, pcr(), NOW, NOW),
            Err(ProtocolError::NotRiskFree)
        );
        assert_eq!(
            thf_issue(&bm, &doc(1), true, pcr(), NOW, NOW),
            Err(ProtocolError::NotAuthorizedIssuer(Role::Bm))
        );
        assert_eq!(
            thf_issue(&thf, &doc(1), true, pcr(), NOW.plus(1), NOW),
            Err(ProtocolError::FutureTimestamp)
        );
    }

    fn setup() -> (KeyPair, KeyPair, ChainState) {
        let hsa = keygen(Role::Hsa, Some([3; 32]));
        let thf = keygen(Role::Thf, Some([4; 32]));
        let state = ChainState::new(
            vec![hsa.owner().clone()],
            [thf.owner().clone()],
            NOW.minus(86_400),
            LedgerConfig::default(),
        )
        .unwrap();
        (hsa, thf, state)
    }

    #[test]
    fn registering_three_yields_three_resolving_tokens() {
        let (hsa, thf, mut state) = setup();
        let pending: Vec<_> = (0..3)
            .map(|n| thf_issue(&thf, &doc(n), true, pcr(), NOW.minus(60), NOW).unwrap())
            .collect();
        let tokens = hsa_register(&hsa, &mut state, &pending, NOW).unwrap();
        assert_eq!(state.height(), 1);
        assert_eq!(state.tip().records.len(), 3);
        for (n, (t, p)) in tokens.iter().zip(&pending).enumerate() {
            let (_, rec) = state.lookup_by_token(t, &doc(n as u32)).unwrap();
            assert_eq!(rec, &p.record);
        }
    }

    #[test]
    fn empty_batch_is_refused() {
        let (hsa, _, mut state) = setup();
        assert_eq!(
            hsa_register(&hsa, &mut state, &[], NOW),
            Err(ProtocolError::Ledger(LedgerError::EmptyBatch))
        );
    }

    #[test]
    fn tokens_follow_canonical_positions_not_submission_order() {
        let (hsa, thf, mut state) = setup();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut pending: Vec<_> = (0..6)
            .map(|n| thf_issue_with_rng(&thf, &doc(n), true, pcr(), NOW, NOW, &mut rng).unwrap())
            .collect();
        pending.sort_by_key(|p| std::cmp::Reverse(p.record.commitment));
        let tokens = hsa_register(&hsa, &mut state, &pending, NOW).unwrap();
        let indices: Vec<u32> = tokens.iter().map(|t| t.record_index).collect();
        assert_eq!(indices, vec![5, 4, 3, 2, 1, 0]);
        for (t, p) in tokens.iter().zip(&pending) {
            assert_eq!(state.tip().records[t.record_index as usize], p.record);
            assert_eq!(t.salt, p.salt);
        }
    }
}
