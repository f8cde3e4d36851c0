use std::collections::{BTreeMap, HashMap};

use crate::crypto::{commit, verify_sig, KeyPair};
use crate::registry::Registry;
use crate::types::{
    ActorId, Commitment, Digest, HealthPassport, MemberId, Role, Timestamp, TravelDocument,
};

use super::block::{Block, BlockHeader, DhpToken};
use super::merkle::merkle_root;
use super::{LedgerConfig, LedgerError, LookupError, ValidationError};

/// Where a record lives on chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RecordLocation {
    pub height: u64,
    pub index: u32,
}

/// Round-robin by height.
pub fn scheduled_authority(height: u64, authority_set: &[ActorId]) -> Result<&ActorId, LedgerError> {
    if authority_set.is_empty() {
        return Err(LedgerError::EmptyAuthoritySet);
    }
    Ok(&authority_set[(height % authority_set.len() as u64) as usize])
}

/// A node's view of the ledger. Only [`ChainState::append_block`] mutates it.
#[derive(Debug, Clone)]
pub struct ChainState {
    blocks: Vec<Block>,
    authority_set: Vec<ActorId>,
    issuers: BTreeMap<MemberId, ActorId>,
    index: HashMap<Commitment, RecordLocation>,
    by_hash: HashMap<Digest, u64>,
    config: LedgerConfig,
}

impl ChainState {
    pub fn new(
        authority_set: Vec<ActorId>,
        issuers: impl IntoIterator<Item = ActorId>,
        genesis_time: Timestamp,
        config: LedgerConfig,
    ) -> Result<Self, LedgerError> {
        let first = scheduled_authority(0, &authority_set)?.id;
        Self::with_genesis(Block::genesis(first, genesis_time), authority_set, issuers, config)
    }

    pub fn from_registry(
        registry: &Registry,
        genesis_time: Timestamp,
        config: LedgerConfig,
    ) -> Result<Self, LedgerError> {
        Self::new(registry.authority_set(), registry.issuers(), genesis_time, config)
    }

    /// Starts from an existing genesis block, e.g. the first frame of a block log.
    pub fn with_genesis(
        genesis: Block,
        authority_set: Vec<ActorId>,
        issuers: impl IntoIterator<Item = ActorId>,
        config: LedgerConfig,
    ) -> Result<Self, LedgerError> {
        let first = scheduled_authority(0, &authority_set)?.id;
        if authority_set.iter().any(|a| a.role != Role::Hsa) {
            return Err(LedgerError::InvalidGenesis);
        }
        if genesis != Block::genesis(first, genesis.header.block_time) {
            return Err(LedgerError::InvalidGenesis);
        }
        let issuers = issuers
            .into_iter()
            .filter(|a| a.role == Role::Thf)
            .map(|a| (a.id, a))
            .collect();
        let mut by_hash = HashMap::new();
        by_hash.insert(genesis.hash(), 0);
        Ok(Self {
            blocks: vec![genesis],
            authority_set,
            issuers,
            index: HashMap::new(),
            by_hash,
            config,
        })
    }

    pub fn config(&self) -> &LedgerConfig {
        &self.config
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn genesis(&self) -> &Block {
        &self.blocks[0]
    }

    pub fn tip(&self) -> &Block {
        self.blocks.last().expect("chain always holds genesis")
    }

    pub fn height(&self) -> u64 {
        self.tip().header.height
    }

    pub fn tip_hash(&self) -> Digest {
        self.tip().hash()
    }

    pub fn authority_set(&self) -> &[ActorId] {
        &self.authority_set
    }

    pub fn issuer(&self, id: &MemberId) -> Option<&ActorId> {
        self.issuers.get(id)
    }

    pub fn issuers(&self) -> impl Iterator<Item = &ActorId> {
        self.issuers.values()
    }

    /// The authority allowed to produce the next block.
    pub fn next_proposer(&self) -> &ActorId {
        scheduled_authority(self.height() + 1, &self.authority_set).expect("non-empty set")
    }

    pub fn block_by_hash(&self, hash: &Digest) -> Option<&Block> {
        self.by_hash.get(hash).map(|&h| &self.blocks[h as usize])
    }

    pub fn contains_block(&self, hash: &Digest) -> bool {
        self.by_hash.contains_key(hash)
    }

    pub fn locate(&self, commitment: &Commitment) -> Option<RecordLocation> {
        self.index.get(commitment).copied()
    }

    pub fn record_at(&self, loc: RecordLocation) -> Option<&HealthPassport> {
        self.blocks
            .get(loc.height as usize)?
            .records
            .get(loc.index as usize)
    }

    pub fn record_count(&self) -> usize {
        self.index.len()
    }

    /// Every on-chain record with its location, in chain order.
    pub fn records(&self) -> impl Iterator<Item = (RecordLocation, &HealthPassport)> {
        self.blocks.iter().flat_map(|b| {
            b.records.iter().enumerate().map(move |(i, r)| {
                (
                    RecordLocation {
                        height: b.header.height,
                        index: i as u32,
                    },
                    r,
                )
            })
        })
    }

    pub fn validate_block(&self, block: &Block, now: Timestamp) -> Result<(), ValidationError> {
        validate_block(self, block, now)
    }

    /// Validates then appends. On error the state is untouched.
    pub fn append_block(&mut self, block: Block, now: Timestamp) -> Result<(), ValidationError> {
        validate_block(self, &block, now)?;
        let height = block.header.height;
        for (i, r) in block.records.iter().enumerate() {
            self.index.insert(
                r.commitment,
                RecordLocation {
                    height,
                    index: i as u32,
                },
            );
        }
        self.by_hash.insert(block.hash(), height);
        self.blocks.push(block);
        Ok(())
    }

    /// Replays every block onto a fresh genesis.
    pub fn revalidate(&self, now: Timestamp) -> Result<(), LedgerError> {
        let mut fresh = ChainState::with_genesis(
            self.genesis().clone(),
            self.authority_set.clone(),
            self.issuers.values().cloned(),
            self.config,
        )?;
        for b in &self.blocks[1..] {
            let (height, hash) = (b.header.height, b.hash());
            fresh
                .append_block(b.clone(), now)
                .map_err(|source| LedgerError::Invalid {
                    height,
                    hash,
                    source,
                })?;
        }
        Ok(())
    }

    pub fn lookup_by_token(
        &self,
        token: &DhpToken,
        doc: &TravelDocument,
    ) -> Result<(RecordLocation, &HealthPassport), LookupError> {
        let block = self
            .block_by_hash(&token.header_hash)
            .ok_or(LookupError::NotFound)?;
        let record = block
            .records
            .get(token.record_index as usize)
            .ok_or(LookupError::NotFound)?;
        if commit(doc, &token.salt) != record.commitment {
            return Err(LookupError::CommitmentMismatch);
        }
        let loc = RecordLocation {
            height: block.header.height,
            index: token.record_index,
        };
        Ok((loc, record))
    }

    /// Overwrites a stored record without any validation or reindexing.
    /// Exists for tamper-detection tests only.
    #[doc(hidden)]
    pub fn tamper_record(&mut self, loc: RecordLocation, record: HealthPassport) {
        self.blocks[loc.height as usize].records[loc.index as usize] = record;
    }

    fn fork_key(&self) -> (u64, std::cmp::Reverse<Digest>) {
        (self.height(), std::cmp::Reverse(self.tip_hash()))
    }
}

pub fn validate_block(
    state: &ChainState,
    block: &Block,
    now: Timestamp,
) -> Result<(), ValidationError> {
    let tip = state.tip();
    let header = &block.header;
    let expected = tip.header.height + 1;
    if header.height != expected {
        return Err(ValidationError::WrongHeight {
            expected,
            got: header.height,
        });
    }
    if header.prev_hash != tip.hash() {
        return Err(ValidationError::BadPrevHash);
    }
    let scheduled = scheduled_authority(header.height, &state.authority_set)
        .expect("state always has authorities");
    if header.authority != scheduled.id {
        return Err(ValidationError::WrongAuthority {
            expected: scheduled.id,
            got: header.authority,
        });
    }
    if !verify_sig(
        scheduled.public_key.as_bytes(),
        &header.signing_bytes(),
        header.authority_signature.as_bytes(),
    ) {
        return Err(ValidationError::BadAuthoritySig);
    }
    if merkle_root(&block.records) != header.merkle_root {
        return Err(ValidationError::BadMerkleRoot);
    }
    let n = block.records.len();
    if n == 0 || n > state.config.max_block_records {
        return Err(ValidationError::BadRecordCount(n));
    }
    let mut issuer_keys = Vec::with_capacity(n);
    for (index, r) in block.records.iter().enumerate() {
        let issuer = state
            .issuers
            .get(&r.issuer)
            .ok_or(ValidationError::UnknownIssuer {
                index,
                issuer: r.issuer,
            })?;
        issuer_keys.push(issuer);
    }
    for (index, (r, issuer)) in block.records.iter().zip(&issuer_keys).enumerate() {
        if !verify_sig(
            issuer.public_key.as_bytes(),
            &r.signing_bytes(),
            r.issuer_signature.as_bytes(),
        ) {
            return Err(ValidationError::BadRecordSig { index });
        }
    }
    if let Some(i) = block
        .records
        .windows(2)
        .position(|w| w[0].commitment >= w[1].commitment)
    {
        return Err(ValidationError::BadOrdering { index: i + 1 });
    }
    let skew = state.config.clock_skew_secs;
    if header.block_time < tip.header.block_time {
        return Err(ValidationError::BadTimestamp(format!(
            "block time {} precedes parent time {}",
            header.block_time, tip.header.block_time
        )));
    }
    if header.block_time > now.plus(skew) {
        return Err(ValidationError::BadTimestamp(format!(
            "block time {} is ahead of local clock {now}",
            header.block_time
        )));
    }
    if let Some(i) = block
        .records
        .iter()
        .position(|r| r.tested_at > header.block_time.plus(skew))
    {
        return Err(ValidationError::BadTimestamp(format!(
            "record {i} tested after its block time"
        )));
    }
    if let Some((index, r)) = block
        .records
        .iter()
        .enumerate()
        .find(|(_, r)| state.index.contains_key(&r.commitment))
    {
        return Err(ValidationError::DuplicateRecord {
            index,
            commitment: r.commitment,
        });
    }
    Ok(())
}

/// Builds and signs the next block from `pending`, sorted into canonical order.
pub fn propose_block(
    state: &ChainState,
    pending: &[HealthPassport],
    hsa: &KeyPair,
    now: Timestamp,
) -> Result<Block, LedgerError> {
    let height = state.height() + 1;
    let scheduled = scheduled_authority(height, &state.authority_set)?;
    if hsa.owner() != scheduled {
        return Err(LedgerError::NotScheduled(hsa.id()));
    }
    if pending.is_empty() {
        return Err(LedgerError::EmptyBatch);
    }
    let max = state.config.max_block_records;
    if pending.len() > max {
        return Err(LedgerError::BatchTooLarge {
            got: pending.len(),
            max,
        });
    }
    for (i, r) in pending.iter().enumerate() {
        let ok = state.issuers.get(&r.issuer).is_some_and(|issuer| {
            verify_sig(
                issuer.public_key.as_bytes(),
                &r.signing_bytes(),
                r.issuer_signature.as_bytes(),
            )
        });
        if !ok {
            return Err(LedgerError::InvalidPendingRecord(i));
        }
    }
    let mut records = pending.to_vec();
    records.sort_by_key(|a| a.commitment);
    let mut header = BlockHeader {
        height,
        prev_hash: state.tip_hash(),
        merkle_root: merkle_root(&records),
        authority: hsa.id(),
        block_time: now,
        authority_signature: crate::types::Signature([0; 64]),
    };
    header.authority_signature = hsa.sign(&header.signing_bytes());
    Ok(Block { header, records })
}

/// Longest chain wins; equal heights go to the smallest tip hash.
pub fn fork_choice(candidates: &[ChainState]) -> Result<&ChainState, LedgerError> {
    candidates
        .iter()
        .max_by(|a, b| a.fork_key().cmp(&b.fork_key()))
        .ok_or(LedgerError::NoValidCandidate)
}
