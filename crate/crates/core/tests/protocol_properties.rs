mod common;

use std::collections::HashSet;

use proptest::prelude::*;

use common::{doc, docs, Consortium, T0};
use dhp::crypto::keygen;
use dhp::ledger::ValidationError;
use dhp::protocol::{bm_verify, thf_issue, OutcomeStatus, ProtocolError};
use dhp::{commit, HygienePolicy, Role, Salt, TestMethod, Timestamp};

fn chain_with(c: &Consortium, n: usize) -> (dhp::ChainState, Vec<dhp::DhpToken>) {
    let mut chain = c.chain();
    let pending = c.issue(&docs(n), T0);
    let tokens = c.register(&mut chain, &pending, 50, T0);
    (chain, tokens)
}

/// The same traveller tested repeatedly leaves commitments that share
/// nothing observable.
#[test]
fn unlinkability_repeat_tests_look_unrelated() {
    let c = Consortium::new(1, 3, 1, 1);
    let traveller = doc(7);
    let pending = c.issue(&vec![traveller.clone(); 200], T0);
    let commitments: HashSet<_> = pending.iter().map(|p| p.record.commitment).collect();
    assert_eq!(commitments.len(), 200);
    // No byte position is constant across the commitments.
    for i in 0..32 {
        let values: HashSet<u8> = pending.iter().map(|p| p.record.commitment.0[i]).collect();
        assert!(values.len() > 1, "byte {i} is fixed");
    }
}

/// Without a token's salt a curious member cannot confirm a guess.
#[test]
fn unexplorability_guessing_without_salt_fails() {
    let c = Consortium::new(2, 2, 1, 2);
    let (chain, _) = chain_with(&c, 300);
    let on_chain: HashSet<_> = chain.records().map(|(_, r)| r.commitment).collect();
    let guesses = [Salt([0; 16]), Salt([0xff; 16]), Salt::random()];
    let hits = docs(300)
        .iter()
        .flat_map(|d| guesses.iter().map(move |s| commit(d, s)))
        .filter(|c| on_chain.contains(c))
        .count();
    assert_eq!(hits, 0);
}

/// Records carry no document field in the clear.
#[test]
fn anonymity_records_do_not_embed_the_document() {
    let c = Consortium::new(1, 1, 1, 3);
    let (chain, _) = chain_with(&c, 50);
    for (i, (_, r)) in chain.records().enumerate() {
        let bytes = r.canonical_bytes();
        let d = doc(i);
        for needle in [d.doc_number().as_bytes(), &d.canonical_bytes()[..]] {
            assert!(!bytes.windows(needle.len()).any(|w| w == needle));
        }
    }
    for block in chain.blocks() {
        let bytes = block.canonical_bytes();
        assert!(!bytes.windows(3).any(|w| w == b"TRV"));
    }
}

/// Every record names a registered facility whose key signed it, and blocks
/// carrying records from strangers are refused.
#[test]
fn attribution_records_trace_to_registered_facilities() {
    let c = Consortium::new(3, 5, 1, 4);
    let (chain, _) = chain_with(&c, 120);
    let facilities: HashSet<_> = c.thfs.iter().map(|k| k.id()).collect();
    for (_, r) in chain.records() {
        assert!(facilities.contains(&r.issuer));
        let issuer = chain.issuer(&r.issuer).unwrap();
        assert!(dhp::verify_sig(
            issuer.public_key.as_bytes(),
            &r.signing_bytes(),
            r.issuer_signature.as_bytes()
        ));
    }

    let rogue = keygen(Role::Thf, Some([0xee; 32]));
    let p = thf_issue(&rogue, &doc(999), true, TestMethod::new("RT-qPCR").unwrap(), T0, T0).unwrap();
    let mut block = c.propose(&chain, &c.issue(&[doc(998)], T0), T0);
    block.records.push(p.record);
    block.records.sort_by_key(|a| a.commitment);
    block.header.merkle_root = dhp::ledger::merkle_root(&block.records);
    let hsa = c.hsa_for(&chain);
    block.header.authority_signature = hsa.sign(&block.header.signing_bytes());
    assert!(matches!(chain.validate_block(&block, T0), Err(ValidationError::UnknownIssuer { .. })));
}

#[test]
fn only_facilities_issue_and_only_members_verify() {
    let c = Consortium::new(1, 1, 1, 5);
    let (chain, tokens) = chain_with(&c, 1);
    let m = TestMethod::new("RT-qPCR").unwrap();
    for key in [&c.hsas[0], &c.bms[0]] {
        assert!(matches!(
            thf_issue(key, &doc(0), true, m.clone(), T0, T0),
            Err(ProtocolError::NotAuthorizedIssuer(_))
        ));
    }
    for key in [&c.hsas[0], &c.thfs[0]] {
        assert!(matches!(
            bm_verify(key, &chain, &tokens[0], &doc(0), &HygienePolicy::default(), T0),
            Err(ProtocolError::NotABlockchainMember(_))
        ));
    }
    assert!(matches!(
        thf_issue(&c.thfs[0], &doc(0), false, m.clone(), T0, T0),
        Err(ProtocolError::NotRiskFree)
    ));
    assert!(matches!(
        thf_issue(&c.thfs[0], &doc(0), true, m, T0.plus(1), T0),
        Err(ProtocolError::FutureTimestamp)
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// A token only opens its record for the document it was issued to.
    #[test]
    fn non_transferability(owner in 0usize..40, other in 0usize..1000) {
        prop_assume!(owner != other);
        let c = Consortium::new(1, 2, 1, 6);
        let (chain, tokens) = chain_with(&c, 40);
        let policy = HygienePolicy::default();
        let at = T0.plus(3600);
        let (mine, _) = bm_verify(&c.bms[0], &chain, &tokens[owner], &doc(owner), &policy, at).unwrap();
        prop_assert_eq!(mine.status, OutcomeStatus::Valid);
        let (theirs, _) = bm_verify(&c.bms[0], &chain, &tokens[owner], &doc(other), &policy, at).unwrap();
        prop_assert_eq!(theirs.status, OutcomeStatus::CommitmentMismatch);
    }

    /// Tokens pointing anywhere off-chain are simply not found.
    #[test]
    fn dangling_tokens_are_not_found(index in 40u32.., hash: [u8; 32]) {
        let c = Consortium::new(1, 1, 1, 7);
        let (chain, tokens) = chain_with(&c, 40);
        let policy = HygienePolicy::default();
        let mut t = tokens[0];
        t.record_index = index;
        prop_assert_eq!(bm_verify(&c.bms[0], &chain, &t, &doc(0), &policy, T0).unwrap().0.status, OutcomeStatus::NotFound);
        let mut t = tokens[0];
        t.header_hash = dhp::Digest(hash);
        prop_assert_eq!(bm_verify(&c.bms[0], &chain, &t, &doc(0), &policy, T0).unwrap().0.status, OutcomeStatus::NotFound);
    }
}

#[test]
fn receipts_bind_the_verifier_and_outcome() {
    let c = Consortium::new(1, 1, 2, 8);
    let (chain, tokens) = chain_with(&c, 1);
    let at = Timestamp(T0.0 + 10);
    let (_, r) = bm_verify(&c.bms[0], &chain, &tokens[0], &doc(0), &HygienePolicy::default(), at).unwrap();
    assert!(r.verify(c.bms[0].public().as_bytes()));
    assert!(!r.verify(c.bms[1].public().as_bytes()));
    let mut forged = r.clone();
    forged.outcome_status = OutcomeStatus::NotFound;
    assert!(!forged.verify(c.bms[0].public().as_bytes()));
}
