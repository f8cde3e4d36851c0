use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::crypto::{KeyPair, Salt};
use crate::ledger::{propose_block, Block, ChainState, DhpToken, LedgerConfig};
use crate::protocol::thf_issue_with_rng;
use crate::types::{
    Commitment, Digest, HealthPassport, HygienePolicy, Role, TestMethod, Timestamp, TravelDocument,
};

use super::checks::check_consistency;
use super::config::{DelayModel, SimConfig};
use super::report::{BlockRef, EventKind, InclusionDelay, SimEvent, SimReport};
use super::{NodeId, SimError};

pub const GENESIS_TIME: Timestamp = Timestamp(1_700_000_000);
pub const ROUND_SECS: u64 = 60;
/// Quiescence gives up after this many rounds beyond the configured ones.
const QUIESCENCE_CAP: u32 = 100_000;

pub fn round_time(round: u32) -> Timestamp {
    GENESIS_TIME.plus((round as u64 + 1) * ROUND_SECS)
}

/// A passport submitted during the run, with what the traveller would hold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IssuedDhp {
    pub dhp_id: u64,
    pub doc: TravelDocument,
    pub salt: Salt,
    pub commitment: Commitment,
    pub submitted_round: u32,
    /// Authority whose constituency issued it.
    pub home: NodeId,
    /// Set once the passport is proposed in a block.
    pub token: Option<DhpToken>,
}

/// Everything a finished run leaves behind.
#[derive(Debug, Clone)]
pub struct SimRun {
    pub report: SimReport,
    pub nodes: Vec<ChainState>,
    pub issued: Vec<IssuedDhp>,
    pub bm_keys: Vec<KeyPair>,
    pub end_time: Timestamp,
}

impl SimRun {
    /// Chains identical, and every issued token verifies identically on
    /// every node under the default policy at the end of the run.
    pub fn check_consistency(&self) -> bool {
        let probes: Vec<(DhpToken, TravelDocument)> = self
            .issued
            .iter()
            .filter_map(|d| d.token.map(|t| (t, d.doc.clone())))
            .collect();
        let Some(verifier) = self.bm_keys.first() else {
            return check_consistency(&self.nodes, &[], None, &HygienePolicy::default(), self.end_time);
        };
        check_consistency(
            &self.nodes,
            &probes,
            Some(verifier),
            &HygienePolicy::default(),
            self.end_time,
        )
    }
}

pub fn run_simulation(config: &SimConfig) -> Result<SimReport, SimError> {
    Ok(Simulation::new(config.clone())?.run()?.report)
}

struct Node {
    chain: ChainState,
    key: Option<KeyPair>,
    /// Pending passports by id; only authorities hold any.
    mempool: BTreeMap<u64, HealthPassport>,
    /// Blocks waiting for their parent, keyed by parent hash.
    orphans: HashMap<Digest, Vec<Block>>,
}

pub struct Simulation {
    config: SimConfig,
    rng: ChaCha8Rng,
    thf_keys: Vec<KeyPair>,
    bm_keys: Vec<KeyPair>,
    nodes: Vec<Node>,
    /// In-flight blocks keyed by (delivery round, block hash, recipient).
    queue: BTreeMap<(u32, Digest, NodeId), Block>,
    issued: Vec<IssuedDhp>,
    by_commitment: HashMap<Commitment, u64>,
    /// First round each node applied each passport, `[dhp][node]`.
    applied: Vec<Vec<Option<u32>>>,
    events: Vec<SimEvent>,
    lockstep: bool,
}

impl Simulation {
    pub fn new(config: SimConfig) -> Result<Self, SimError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
        let hsa_keys: Vec<KeyPair> = (0..config.num_hsa)
            .map(|_| KeyPair::generate(Role::Hsa, &mut rng))
            .collect();
        let thf_keys: Vec<KeyPair> = (0..config.num_hsa)
            .map(|_| KeyPair::generate(Role::Thf, &mut rng))
            .collect();
        let bm_keys: Vec<KeyPair> = (0..config.num_bm)
            .map(|_| KeyPair::generate(Role::Bm, &mut rng))
            .collect();
        let genesis = ChainState::new(
            hsa_keys.iter().map(|k| k.owner().clone()).collect(),
            thf_keys.iter().map(|k| k.owner().clone()),
            GENESIS_TIME,
            LedgerConfig::default(),
        )
        .map_err(|e| SimError::InvalidConfig(e.to_string()))?;
        let nodes = hsa_keys
            .into_iter()
            .map(Some)
            .chain((0..config.num_bm).map(|_| None))
            .map(|key| Node {
                chain: genesis.clone(),
                key,
                mempool: BTreeMap::new(),
                orphans: HashMap::new(),
            })
            .collect();
        Ok(Self {
            config,
            rng,
            thf_keys,
            bm_keys,
            nodes,
            queue: BTreeMap::new(),
            issued: Vec::new(),
            by_commitment: HashMap::new(),
            applied: Vec::new(),
            events: Vec::new(),
            lockstep: true,
        })
    }

    pub fn run(mut self) -> Result<SimRun, SimError> {
        let mut round = 0u32;
        loop {
            let submitting = round < self.config.rounds;
            if !submitting && self.quiescent() {
                break;
            }
            if round >= self.config.rounds.saturating_add(QUIESCENCE_CAP) {
                return Err(SimError::NoQuiescence(round));
            }
            if submitting {
                self.submit_phase(round);
            }
            self.propose_phase(round);
            self.deliver_phase(round);
            let tip = self.nodes[0].chain.tip_hash();
            if self.nodes.iter().any(|n| n.chain.tip_hash() != tip) {
                self.lockstep = false;
            }
            round += 1;
        }
        Ok(self.finish(round))
    }

    fn quiescent(&self) -> bool {
        self.queue.is_empty()
            && self
                .nodes
                .iter()
                .all(|n| n.mempool.is_empty() && n.orphans.is_empty())
    }

    fn submit_phase(&mut self, round: u32) {
        let now = round_time(round);
        let num_hsa = self.config.num_hsa as usize;
        for home in 0..num_hsa {
            for _ in 0..self.config.submission_rate {
                let dhp_id = self.issued.len() as u64;
                let doc = TravelDocument::new(
                    format!("SIM{dhp_id:09}"),
                    "GRC",
                    chrono::NaiveDate::from_ymd_opt(2035, 1, 1).expect("valid date"),
                )
                .expect("valid simulated document");
                let tested_at = now.minus(self.rng.gen_range(0..12 * Timestamp::HOUR));
                let method = TestMethod::new("RT-qPCR").expect("valid method");
                let pending = thf_issue_with_rng(
                    &self.thf_keys[home],
                    &doc,
                    true,
                    method,
                    tested_at,
                    now,
                    &mut self.rng,
                )
                .expect("simulated facility issues risk-free results");
                self.by_commitment.insert(pending.record.commitment, dhp_id);
                for node in &mut self.nodes[..num_hsa] {
                    node.mempool.insert(dhp_id, pending.record.clone());
                }
                self.issued.push(IssuedDhp {
                    dhp_id,
                    doc,
                    salt: pending.salt,
                    commitment: pending.record.commitment,
                    submitted_round: round,
                    home: home as NodeId,
                    token: None,
                });
                self.applied.push(vec![None; self.nodes.len()]);
                self.events.push(SimEvent {
                    at_round: round,
                    kind: EventKind::Submit,
                    node: home as NodeId,
                    block: None,
                    dhp_ids: vec![dhp_id],
                });
            }
        }
    }

    fn propose_phase(&mut self, round: u32) {
        let now = round_time(round);
        for idx in 0..self.config.num_hsa as usize {
            let node = &self.nodes[idx];
            let key = node.key.as_ref().expect("authorities hold keys");
            if node.mempool.is_empty() || node.chain.next_proposer() != key.owner() {
                continue;
            }
            let max = node.chain.config().max_block_records;
            let batch: Vec<HealthPassport> = node.mempool.values().take(max).cloned().collect();
            let block = propose_block(&node.chain, &batch, key, now)
                .expect("scheduled authority proposes valid records");
            let header_hash = block.hash();
            for (i, r) in block.records.iter().enumerate() {
                let id = self.by_commitment[&r.commitment] as usize;
                let salt = self.issued[id].salt;
                self.issued[id].token = Some(DhpToken {
                    header_hash,
                    record_index: i as u32,
                    salt,
                });
            }
            self.events.push(SimEvent {
                at_round: round,
                kind: EventKind::Propose,
                node: idx as NodeId,
                block: Some(block_ref(&block)),
                dhp_ids: self.ids_of(&block),
            });
            for to in 0..self.nodes.len() {
                if to == idx {
                    continue;
                }
                let base = match self.config.delay_model {
                    DelayModel::UniformBounded { max_rounds } => self.rng.gen_range(0..=max_rounds),
                    _ => 0,
                };
                let at = self
                    .config
                    .delay_model
                    .delivery_round(idx as NodeId, to as NodeId, round, base);
                self.queue.insert((at, header_hash, to as NodeId), block.clone());
            }
            self.apply(idx, block, round)
                .expect("own proposal extends own tip");
        }
    }

    fn deliver_phase(&mut self, round: u32) {
        while let Some(entry) = self.queue.first_entry() {
            if entry.key().0 > round {
                break;
            }
            let ((_, _, to), block) = entry.remove_entry();
            self.receive(to as usize, block, round);
        }
    }

    fn receive(&mut self, idx: usize, block: Block, round: u32) {
        self.events.push(SimEvent {
            at_round: round,
            kind: EventKind::Deliver,
            node: idx as NodeId,
            block: Some(block_ref(&block)),
            dhp_ids: self.ids_of(&block),
        });
        let chain = &self.nodes[idx].chain;
        if chain.contains_block(&block.hash()) || block.height() <= chain.height() {
            self.drop_block(idx, &block, round);
            return;
        }
        if block.header.prev_hash != chain.tip_hash() {
            self.nodes[idx]
                .orphans
                .entry(block.header.prev_hash)
                .or_default()
                .push(block);
            return;
        }
        // Extending the tip is always the fork-choice winner: strictly longer.
        let mut ready = vec![block];
        while let Some(b) = ready.pop() {
            let hash = b.hash();
            if self.apply(idx, b.clone(), round).is_err() {
                self.drop_block(idx, &b, round);
                continue;
            }
            if let Some(children) = self.nodes[idx].orphans.remove(&hash) {
                ready.extend(children);
            }
        }
    }

    fn drop_block(&mut self, idx: usize, block: &Block, round: u32) {
        self.events.push(SimEvent {
            at_round: round,
            kind: EventKind::Drop,
            node: idx as NodeId,
            block: Some(block_ref(block)),
            dhp_ids: Vec::new(),
        });
    }

    fn apply(&mut self, idx: usize, block: Block, round: u32) -> Result<(), ()> {
        let ids = self.ids_of(&block);
        let node = &mut self.nodes[idx];
        node.chain.append_block(block, round_time(round)).map_err(|_| ())?;
        for id in ids {
            node.mempool.remove(&id);
            self.applied[id as usize][idx].get_or_insert(round);
        }
        Ok(())
    }

    fn ids_of(&self, block: &Block) -> Vec<u64> {
        block
            .records
            .iter()
            .map(|r| self.by_commitment[&r.commitment])
            .collect()
    }

    fn finish(self, rounds_run: u32) -> SimRun {
        let mut inclusion = Vec::new();
        for (d, per_node) in self.issued.iter().zip(&self.applied) {
            for (node, at) in per_node.iter().enumerate() {
                if let Some(at) = at {
                    inclusion.push(InclusionDelay {
                        dhp_id: d.dhp_id,
                        node: node as NodeId,
                        delay_rounds: at - d.submitted_round + 1,
                    });
                }
            }
        }
        let first = self.nodes[0].chain.blocks();
        let consistent = self.nodes.iter().all(|n| n.chain.blocks() == first);
        let report = SimReport {
            max_inclusion_delay: inclusion.iter().map(|d| d.delay_rounds).max().unwrap_or(0),
            inclusion,
            submitted: self.issued.len() as u64,
            final_heights: self.nodes.iter().map(|n| n.chain.height()).collect(),
            final_tips: self.nodes.iter().map(|n| n.chain.tip_hash()).collect(),
            consistent,
            lockstep: self.lockstep,
            rounds_run,
            events: self.events,
        };
        SimRun {
            report,
            nodes: self.nodes.into_iter().map(|n| n.chain).collect(),
            issued: self.issued,
            bm_keys: self.bm_keys,
            end_time: round_time(rounds_run),
        }
    }
}

fn block_ref(block: &Block) -> BlockRef {
    BlockRef {
        hash: block.hash(),
        parent: block.header.prev_hash,
        height: block.height(),
    }
}
