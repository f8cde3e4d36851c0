//! How a destination's entry policy treats one passport over time.

use dhp::crypto::keygen;
use dhp::ledger::LedgerConfig;
use dhp::protocol::{bm_verify, hsa_register, parse_policy, thf_issue};
use dhp::{ChainState, HygienePolicy, Registry, Role, TestMethod, Timestamp, TravelDocument};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let hsa = keygen(Role::Hsa, Some([1; 32]));
    let thf = keygen(Role::Thf, Some([2; 32]));
    let bm = keygen(Role::Bm, Some([3; 32]));
    let mut registry = Registry::new();
    for key in [&hsa, &thf, &bm] {
        registry.add(key.owner().clone())?;
    }
    let tested = Timestamp(1_700_000_000);
    let mut chain = ChainState::from_registry(&registry, tested, LedgerConfig::default())?;
    let doc = TravelDocument::parse("CD9876543:FRA:2029-12-31")?;
    let lamp = thf_issue(&thf, &doc, true, TestMethod::new("RT-LAMP")?, tested, tested)?;
    let token = hsa_register(&hsa, &mut chain, &[lamp], tested)?[0];

    let strict = HygienePolicy::default();
    let lenient = parse_policy(
        "accepted_methods = RT-qPCR,RT-LAMP\nmax_test_age_hours = 72\nrequire_risk_free = true\n",
    )?;

    for (label, policy) in [("RT-qPCR only", &strict), ("PCR or LAMP", &lenient)] {
        println!("{label}:");
        for offset in [0, 24 * 3600, 72 * 3600, 72 * 3600 + 1] {
            let at = tested.plus(offset);
            let (outcome, _) = bm_verify(&bm, &chain, &token, &doc, policy, at)?;
            println!("  {:>6} s after the test -> {outcome}", offset);
        }
    }
    Ok(())
}
