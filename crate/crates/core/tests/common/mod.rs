#![allow(dead_code)]

use dhp::crypto::keygen;
use dhp::ledger::{propose_block, LedgerConfig};
use dhp::protocol::{thf_issue, PendingDhp};
use dhp::registry::Member;
use dhp::{ChainState, DhpToken, KeyPair, Registry, Role, TestMethod, Timestamp, TravelDocument};

pub const T0: Timestamp = Timestamp(1_700_000_000);

pub struct Consortium {
    pub hsas: Vec<KeyPair>,
    pub thfs: Vec<KeyPair>,
    pub bms: Vec<KeyPair>,
    pub registry: Registry,
}

fn seeded(role: Role, tag: u8, i: usize) -> KeyPair {
    let mut seed = [tag; 32];
    seed[0] = role.code();
    seed[1..9].copy_from_slice(&(i as u64).to_be_bytes());
    keygen(role, Some(seed))
}

impl Consortium {
    /// Facility `i` is homed at authority `i % hsas`.
    pub fn new(hsas: usize, thfs: usize, bms: usize, tag: u8) -> Self {
        let hsas: Vec<_> = (0..hsas).map(|i| seeded(Role::Hsa, tag, i)).collect();
        let thfs: Vec<_> = (0..thfs).map(|i| seeded(Role::Thf, tag, i)).collect();
        let bms: Vec<_> = (0..bms).map(|i| seeded(Role::Bm, tag, i)).collect();
        let mut registry = Registry::new();
        for k in &hsas {
            registry.add(k.owner().clone()).unwrap();
        }
        for (i, k) in thfs.iter().enumerate() {
            let home = Some(hsas[i % hsas.len()].id());
            registry.add_member(Member { actor: k.owner().clone(), home }).unwrap();
        }
        for k in &bms {
            registry.add(k.owner().clone()).unwrap();
        }
        Self { hsas, thfs, bms, registry }
    }

    pub fn chain(&self) -> ChainState {
        ChainState::from_registry(&self.registry, T0, LedgerConfig::default()).unwrap()
    }

    pub fn hsa_for(&self, chain: &ChainState) -> &KeyPair {
        let id = chain.next_proposer().id;
        self.hsas.iter().find(|k| k.id() == id).unwrap()
    }

    /// Facility `i % thfs` issues a risk-free PCR result for each document.
    pub fn issue(&self, docs: &[TravelDocument], tested_at: Timestamp) -> Vec<PendingDhp> {
        docs.iter()
            .enumerate()
            .map(|(i, d)| {
                let thf = &self.thfs[i % self.thfs.len()];
                thf_issue(thf, d, true, TestMethod::new("RT-qPCR").unwrap(), tested_at, tested_at).unwrap()
            })
            .collect()
    }

    /// Registers `pending` in blocks of at most `per_block`, each by the
    /// scheduled authority. Returns tokens in input order.
    pub fn register(&self, chain: &mut ChainState, pending: &[PendingDhp], per_block: usize, now: Timestamp) -> Vec<DhpToken> {
        let mut tokens = Vec::with_capacity(pending.len());
        for batch in pending.chunks(per_block) {
            let hsa = self.hsa_for(chain);
            tokens.extend(dhp::protocol::hsa_register(hsa, chain, batch, now).unwrap());
        }
        tokens
    }

    pub fn propose(&self, chain: &ChainState, pending: &[PendingDhp], now: Timestamp) -> dhp::Block {
        let records: Vec<_> = pending.iter().map(|p| p.record.clone()).collect();
        propose_block(chain, &records, self.hsa_for(chain), now).unwrap()
    }
}

pub fn doc(i: usize) -> TravelDocument {
    TravelDocument::parse(&format!("TRV{i:07}:DEU:2031-01-01")).unwrap()
}

pub fn docs(n: usize) -> Vec<TravelDocument> {
    (0..n).map(doc).collect()
}
