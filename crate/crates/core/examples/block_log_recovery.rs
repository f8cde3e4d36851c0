//! A node's block log survives a crash mid-write, and corruption is located.

use std::fs;

use dhp::crypto::keygen;
use dhp::ledger::{propose_block, LedgerConfig};
use dhp::protocol::thf_issue;
use dhp::service::{audit_block_log, BlockLog};
use dhp::{Registry, Role, TestMethod, Timestamp, TravelDocument};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("blocks.log");
    let hsa = keygen(Role::Hsa, Some([1; 32]));
    let thf = keygen(Role::Thf, Some([2; 32]));
    let mut registry = Registry::new();
    registry.add(hsa.owner().clone())?;
    registry.add(thf.owner().clone())?;
    let t0 = Timestamp(1_700_000_000);
    let cfg = LedgerConfig::default();

    let mut node = BlockLog::open_or_create(&path, &registry, t0, cfg, t0)?;
    for n in 1..=5u64 {
        let now = t0.plus(n * 60);
        let doc = TravelDocument::parse(&format!("GH{n:07}:NLD:2030-06-01"))?;
        let p = thf_issue(&thf, &doc, true, TestMethod::new("RT-qPCR")?, now, now)?;
        let block = propose_block(&node.chain, &[p.record], &hsa, now)?;
        node.log.append(&block)?;
        node.chain.append_block(block, now)?;
    }
    drop(node);
    let now = t0.plus(3600);
    println!("wrote {} bytes, height 5", fs::metadata(&path)?.len());

    let bytes = fs::read(&path)?;
    fs::write(&path, &bytes[..bytes.len() - 17])?;
    println!("crash: last 17 bytes lost");
    match audit_block_log(&path, &registry, t0, cfg, now) {
        Err(e) => println!("audit before restart: {e}"),
        Ok(_) => println!("audit before restart: ok"),
    }
    let restarted = BlockLog::recover(&path, &registry, t0, cfg, now)?;
    println!(
        "restart: height {}, discarded {} bytes of a torn frame",
        restarted.chain.height(),
        restarted.discarded_bytes
    );
    drop(restarted);
    println!("audit after restart: height {}", audit_block_log(&path, &registry, t0, cfg, now)?.height());

    let mut bytes = fs::read(&path)?;
    bytes[300] ^= 0x80;
    fs::write(&path, &bytes)?;
    println!("flipped one bit at byte 300");
    if let Err(e) = audit_block_log(&path, &registry, t0, cfg, now) {
        println!("audit: {e}");
    }
    Ok(())
}
