//! An authority node and a member node talking over TCP on localhost.

use std::sync::Arc;

use dhp::crypto::keygen;
use dhp::ledger::LedgerConfig;
use dhp::protocol::thf_issue;
use dhp::registry::Member;
use dhp::service::{sync_with_peer, BlockLog, Client, Node, ReceiptLog, Server};
use dhp::{HygienePolicy, Registry, Role, TestMethod, Timestamp, TravelDocument};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let hsa = keygen(Role::Hsa, None);
    let thf = keygen(Role::Thf, None);
    let bm = keygen(Role::Bm, None);
    let mut registry = Registry::new();
    registry.add(hsa.owner().clone())?;
    registry.add_member(Member { actor: thf.owner().clone(), home: Some(hsa.id()) })?;
    registry.add(bm.owner().clone())?;

    let genesis = Timestamp(1_700_000_000);
    let now = Timestamp::now();
    let open = |key: dhp::KeyPair, name: &str| -> Result<Arc<Node>, Box<dyn std::error::Error>> {
        let rec = BlockLog::open_or_create(&dir.path().join(format!("{name}.log")), &registry, genesis, LedgerConfig::default(), now)?;
        let receipts = match key.role() {
            Role::Bm => Some(ReceiptLog::open(&dir.path().join("receipts.log"))?),
            _ => None,
        };
        Ok(Arc::new(Node::from_parts(key, registry.clone(), HygienePolicy::default(), rec.log, rec.chain, receipts)?))
    };
    let hsa_node = open(hsa.clone(), "hsa")?;
    let bm_node = open(bm.clone(), "bm")?;
    let hsa_server = Server::start(hsa_node.clone(), "127.0.0.1:0")?;
    let bm_server = Server::start(bm_node.clone(), "127.0.0.1:0")?;
    println!("authority on {}, member on {}", hsa_server.local_addr(), bm_server.local_addr());

    let doc = TravelDocument::parse("JK4444444:ITA:2032-02-29")?;
    let pending = thf_issue(&thf, &doc, true, TestMethod::new("RT-qPCR")?, now, now)?;
    let mut facility = Client::connect(hsa_server.local_addr(), &thf)?;
    let (ack, _) = facility.submit_dhp(&pending)?;
    println!("submitted, ack {ack}; token yet? {:?}", facility.query_token(ack)?);
    println!("resubmitting the same record: {:?}", facility.submit_dhp(&pending)?);

    let block = hsa_node.tick(now)?.expect("the only authority is always scheduled");
    println!("proposed block {} at height {}", block.hash(), block.height());
    let token = facility.query_token(ack)?.expect("included");

    sync_with_peer(&hsa_node, &mut Client::connect(bm_server.local_addr(), &hsa)?, now)?;
    let mut airline = Client::connect(bm_server.local_addr(), &bm)?;
    println!("member head: height {}", airline.get_chain_head()?.height);
    let (outcome, receipt) = airline.verify(&token, &doc, now)?;
    println!("verify over TCP: {outcome}, receipt {}", receipt.receipt_id());

    match airline.push_block(&block) {
        Err(e) => println!("member pushing a block: {e}"),
        Ok(h) => println!("member pushed a block?! height {h}"),
    }
    let outsider = keygen(Role::Bm, None);
    match Client::connect(bm_server.local_addr(), &outsider) {
        Err(e) => println!("unregistered key: {e}"),
        Ok(_) => println!("unregistered key got in?!"),
    }
    Ok(())
}
