//! Flips every bit of a stored record and shows that none still verifies.

use std::collections::BTreeMap;

use dhp::crypto::keygen;
use dhp::ledger::{LedgerConfig, RecordLocation};
use dhp::protocol::{bm_verify, hsa_register, thf_issue};
use dhp::{ChainState, HealthPassport, HygienePolicy, Registry, Role, TestMethod, Timestamp, TravelDocument};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let hsa = keygen(Role::Hsa, Some([1; 32]));
    let thf = keygen(Role::Thf, Some([2; 32]));
    let bm = keygen(Role::Bm, Some([3; 32]));
    let mut registry = Registry::new();
    for key in [&hsa, &thf, &bm] {
        registry.add(key.owner().clone())?;
    }
    let t0 = Timestamp(1_700_000_000);
    let mut chain = ChainState::from_registry(&registry, t0, LedgerConfig::default())?;
    let doc = TravelDocument::parse("EF5550001:ESP:2031-07-01")?;
    let pending = thf_issue(&thf, &doc, true, TestMethod::new("RT-qPCR")?, t0, t0)?;
    let token = hsa_register(&hsa, &mut chain, std::slice::from_ref(&pending), t0)?[0];
    let at = t0.plus(3600);
    let policy = HygienePolicy::default();

    let loc = RecordLocation { height: 1, index: 0 };
    let original = pending.record.canonical_bytes();
    let mut tally: BTreeMap<String, usize> = BTreeMap::new();
    for bit in 0..original.len() * 8 {
        let mut bytes = original.clone();
        bytes[bit / 8] ^= 1 << (bit % 8);
        let label = match HealthPassport::from_canonical_bytes(&bytes) {
            Err(_) => "undecodable".to_string(),
            Ok(forged) => {
                let mut tampered = chain.clone();
                tampered.tamper_record(loc, forged);
                bm_verify(&bm, &tampered, &token, &doc, &policy, at)?.0.to_string()
            }
        };
        *tally.entry(label).or_default() += 1;
    }
    println!("{} single-bit forgeries of a {}-byte record:", original.len() * 8, original.len());
    for (outcome, n) in &tally {
        println!("  {n:>5}  {outcome}");
    }
    println!("untouched record: {}", bm_verify(&bm, &chain, &token, &doc, &policy, at)?.0);
    Ok(())
}
