//! An airline verifies a flight's passengers; an auditor checks the receipts
//! against the manifest.

use dhp::crypto::keygen;
use dhp::ledger::LedgerConfig;
use dhp::protocol::{audit_manifest, bm_verify, hsa_register, thf_issue, ManifestEntry};
use dhp::{ChainState, HygienePolicy, Registry, Role, TestMethod, Timestamp, TravelDocument};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let hsa = keygen(Role::Hsa, Some([1; 32]));
    let thf = keygen(Role::Thf, Some([2; 32]));
    let airline = keygen(Role::Bm, Some([3; 32]));
    let mut registry = Registry::new();
    for key in [&hsa, &thf, &airline] {
        registry.add(key.owner().clone())?;
    }
    let t0 = Timestamp(1_700_000_000);
    let mut chain = ChainState::from_registry(&registry, t0, LedgerConfig::default())?;

    let docs: Vec<TravelDocument> = (0..12)
        .map(|i| TravelDocument::parse(&format!("PAX{i:06}:GBR:2030-10-10")))
        .collect::<Result<_, _>>()?;
    let pending = docs
        .iter()
        .map(|d| thf_issue(&thf, d, true, TestMethod::new("RT-qPCR")?, t0, t0))
        .collect::<Result<Vec<_>, _>>()?;
    let tokens = hsa_register(&hsa, &mut chain, &pending, t0)?;
    let manifest: Vec<ManifestEntry> = tokens
        .iter()
        .map(|t| ManifestEntry { header_hash: t.header_hash, record_index: t.record_index })
        .collect();

    let boarding = t0.plus(2 * Timestamp::HOUR);
    let mut receipts = Vec::new();
    for (token, doc) in tokens.iter().zip(&docs) {
        receipts.push(bm_verify(&airline, &chain, token, doc, &HygienePolicy::default(), boarding)?.1);
    }

    for withheld in [0, 1, 5] {
        let kept = &receipts[withheld..];
        let report = audit_manifest(kept, &manifest, &registry)?;
        println!(
            "{withheld} receipts withheld -> {} passengers unaccounted for",
            report.missing.len()
        );
    }
    Ok(())
}
