//! One passport from test to boarding gate, entirely in memory.

use dhp::crypto::keygen;
use dhp::ledger::LedgerConfig;
use dhp::protocol::{bm_verify, hsa_register, register_citizen, thf_issue};
use dhp::{ChainState, HygienePolicy, Registry, Role, TestMethod, Timestamp, TravelDocument};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let hsa = keygen(Role::Hsa, None);
    let thf = keygen(Role::Thf, None);
    let airline = keygen(Role::Bm, None);

    let mut registry = Registry::new();
    for key in [&hsa, &thf, &airline] {
        registry.add(key.owner().clone())?;
    }

    let t0 = Timestamp::now();
    let mut chain = ChainState::from_registry(&registry, t0, LedgerConfig::default())?;

    let mut wallet = register_citizen(TravelDocument::parse("AB1234567:GRC:2030-01-01")?);
    let tested_at = t0.minus(6 * Timestamp::HOUR);
    let pending = thf_issue(&thf, &wallet.doc, true, TestMethod::new("RT-qPCR")?, tested_at, t0)?;
    println!("facility signed commitment {}", pending.record.commitment);

    let tokens = hsa_register(&hsa, &mut chain, &[pending], t0)?;
    wallet.accept_token(tokens[0], &chain)?;
    println!("block {} holds the record; token {}", chain.height(), tokens[0].to_hex());

    let departure = t0.plus(24 * Timestamp::HOUR);
    let (outcome, receipt) = bm_verify(
        &airline,
        &chain,
        &wallet.tokens()[0],
        &wallet.doc,
        &HygienePolicy::default(),
        departure,
    )?;
    println!("verification: {outcome} (receipt {})", receipt.receipt_id());

    let impostor = TravelDocument::parse("ZZ7654321:GRC:2030-01-01")?;
    let (outcome, _) = bm_verify(&airline, &chain, &tokens[0], &impostor, &HygienePolicy::default(), departure)?;
    println!("same token, another passport: {outcome}");
    Ok(())
}
