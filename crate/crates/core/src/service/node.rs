use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::sync::{Mutex, MutexGuard, RwLock, RwLockReadGuard};

use crate::crypto::{verify_sig, KeyPair, Salt};
use crate::ledger::{propose_block, Block, BlockHeader, ChainState, DhpToken, LedgerConfig};
use crate::protocol::{
    bm_verify, parse_policy, PendingDhp, VerificationOutcome, VerificationReceipt,
};
use crate::registry::Registry;
use crate::types::{ActorId, Commitment, Digest, HygienePolicy, MemberId, Role, Timestamp, TravelDocument};

use super::config::NodeConfig;
use super::storage::{BlockLog, ReceiptLog};
use super::wire::{ErrorKind, Request, Response};
use super::ServiceError;

/// Most blocks returned by one `GetBlocksFrom`.
pub const MAX_BLOCKS_PER_RESPONSE: usize = 256;

fn refuse(kind: ErrorKind, message: impl Into<String>) -> ServiceError {
    ServiceError::Refused {
        kind,
        message: message.into(),
    }
}

struct Writer {
    log: BlockLog,
    /// Pending submissions by acknowledgement id, oldest first.
    mempool: BTreeMap<u64, PendingDhp>,
    acks: HashMap<Commitment, u64>,
    submitted: HashMap<u64, (Commitment, Salt)>,
    next_ack: u64,
}

impl Writer {
    fn forget_included(&mut self, block: &Block) {
        for r in &block.records {
            if let Some(ack) = self.acks.get(&r.commitment) {
                self.mempool.remove(ack);
            }
        }
    }
}

/// One consortium member's node: replicated chain, block log, and for
/// authorities a mempool of submissions awaiting their turn.
///
/// All appends go through a single writer lock that owns the block log;
/// readers take a shared lock on the chain and never block each other.
pub struct Node {
    identity: KeyPair,
    registry: Registry,
    policy: HygienePolicy,
    chain: RwLock<ChainState>,
    writer: Mutex<Writer>,
    receipts: Option<Mutex<ReceiptLog>>,
}

impl Node {
    /// Loads registry, key and policy, then opens or creates the data
    /// directory, replaying the block log.
    pub fn open(config: &NodeConfig, now: Timestamp) -> Result<Self, ServiceError> {
        let read = |p: &std::path::Path| {
            fs::read_to_string(p).map_err(|e| ServiceError::Config(format!("{}: {e}", p.display())))
        };
        let registry = Registry::parse(&read(&config.registry_file)?)?;
        let identity = KeyPair::from_key_file(&read(&config.key_file)?)?;
        if identity.role() != config.role.role() {
            return Err(ServiceError::Config(format!(
                "key file holds a {} key but the node role is {}",
                identity.role(),
                config.role.role()
            )));
        }
        let policy = match &config.policy_file {
            Some(p) => parse_policy(&read(p)?)?,
            None => HygienePolicy::default(),
        };
        fs::create_dir_all(&config.data_dir)
            .map_err(|e| ServiceError::Config(format!("{}: {e}", config.data_dir.display())))?;
        let recovered = BlockLog::open_or_create(
            &config.block_log_path(),
            &registry,
            Timestamp(config.genesis_time),
            LedgerConfig::default(),
            now,
        )?;
        let receipts = match identity.role() {
            Role::Bm => Some(ReceiptLog::open(&config.receipt_log_path())?),
            _ => None,
        };
        Self::from_parts(identity, registry, policy, recovered.log, recovered.chain, receipts)
    }

    pub fn from_parts(
        identity: KeyPair,
        registry: Registry,
        policy: HygienePolicy,
        log: BlockLog,
        chain: ChainState,
        receipts: Option<ReceiptLog>,
    ) -> Result<Self, ServiceError> {
        if registry.actor(&identity.id()) != Some(identity.owner()) {
            return Err(ServiceError::Config(format!(
                "node key {} is not registered",
                identity.id()
            )));
        }
        if !matches!(identity.role(), Role::Hsa | Role::Bm) {
            return Err(ServiceError::Config(format!(
                "a {} cannot run a node",
                identity.role()
            )));
        }
        Ok(Self {
            identity,
            registry,
            policy,
            chain: RwLock::new(chain),
            writer: Mutex::new(Writer {
                log,
                mempool: BTreeMap::new(),
                acks: HashMap::new(),
                submitted: HashMap::new(),
                next_ack: 1,
            }),
            receipts: receipts.map(Mutex::new),
        })
    }

    pub fn identity(&self) -> &KeyPair {
        &self.identity
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn policy(&self) -> &HygienePolicy {
        &self.policy
    }

    /// Shared read access to the replicated chain.
    pub fn chain(&self) -> RwLockReadGuard<'_, ChainState> {
        self.chain.read().expect("chain lock poisoned")
    }

    fn writer(&self) -> MutexGuard<'_, Writer> {
        self.writer.lock().expect("writer lock poisoned")
    }

    pub fn height(&self) -> u64 {
        self.chain().height()
    }

    pub fn mempool_len(&self) -> usize {
        self.writer().mempool.len()
    }

    /// Serves one authenticated request.
    pub fn handle(&self, requester: &MemberId, request: Request, now: Timestamp) -> Response {
        let Some(actor) = self.registry.actor(requester) else {
            return Response::error(ErrorKind::Unauthorized, "requester is not a consortium member");
        };
        let result = match request {
            Request::SubmitDhp(p) => self
                .submit_dhp(actor, p, now)
                .map(|(ack_id, duplicate)| Response::Ack { ack_id, duplicate }),
            Request::QueryToken(ack) => self.query_token(actor, ack).map(Response::Token),
            Request::GetBlock(h) => self.get_block(&h).map(Response::Block),
            Request::GetChainHead => Ok(Response::Head(self.chain_head())),
            Request::GetBlocksFrom(h) => Ok(Response::Blocks(self.blocks_from(h))),
            Request::PushBlock(b) => self
                .accept_block(actor, b, now)
                .map(|height| Response::Pushed { height }),
            Request::Verify { token, doc, at } => self
                .verify(actor, &token, &doc, at)
                .map(|(outcome, receipt)| Response::Verified { outcome, receipt }),
        };
        result.unwrap_or_else(|e| match e {
            ServiceError::Refused { kind, message } => Response::Error { kind, message },
            other => Response::error(ErrorKind::Internal, other.to_string()),
        })
    }

    /// Queues a facility's signed record. Resubmitting a known record returns
    /// the original acknowledgement id with `duplicate = true`.
    pub fn submit_dhp(
        &self,
        requester: &ActorId,
        pending: PendingDhp,
        now: Timestamp,
    ) -> Result<(u64, bool), ServiceError> {
        if self.identity.role() != Role::Hsa {
            return Err(refuse(ErrorKind::Forbidden, "only authority nodes accept submissions"));
        }
        if requester.role != Role::Thf {
            return Err(refuse(
                ErrorKind::Forbidden,
                format!("a {} may not submit passports", requester.role),
            ));
        }
        let record = &pending.record;
        if record.issuer != requester.id {
            return Err(refuse(ErrorKind::Rejected, "record issuer is not the submitting facility"));
        }
        if let Some(home) = self.registry.get(&requester.id).and_then(|m| m.home) {
            if home != self.identity.id() {
                return Err(refuse(ErrorKind::Rejected, format!("facility's home authority is {home}")));
            }
        }
        if !verify_sig(
            requester.public_key.as_bytes(),
            &record.signing_bytes(),
            record.issuer_signature.as_bytes(),
        ) {
            return Err(refuse(ErrorKind::Rejected, "issuer signature does not verify"));
        }
        if !record.result {
            return Err(refuse(ErrorKind::Rejected, "only risk-free results are registered"));
        }
        let skew = self.chain().config().clock_skew_secs;
        if record.tested_at > now.plus(skew) {
            return Err(refuse(ErrorKind::Rejected, "test time is in the future"));
        }
        let mut w = self.writer();
        if let Some(&ack) = w.acks.get(&record.commitment) {
            return Ok((ack, true));
        }
        let ack = w.next_ack;
        w.next_ack += 1;
        w.acks.insert(record.commitment, ack);
        w.submitted.insert(ack, (record.commitment, pending.salt));
        if self.chain().locate(&record.commitment).is_none() {
            w.mempool.insert(ack, pending);
        }
        Ok((ack, false))
    }

    /// The token for an acknowledged submission, once it is on chain.
    pub fn query_token(&self, requester: &ActorId, ack: u64) -> Result<Option<DhpToken>, ServiceError> {
        if requester.role == Role::Bm {
            return Err(refuse(ErrorKind::Forbidden, "submission status is not visible to members"));
        }
        let (commitment, salt) = *self
            .writer()
            .submitted
            .get(&ack)
            .ok_or_else(|| refuse(ErrorKind::NotFound, format!("no submission with ack {ack}")))?;
        let chain = self.chain();
        Ok(chain.locate(&commitment).map(|loc| DhpToken {
            header_hash: chain.blocks()[loc.height as usize].hash(),
            record_index: loc.index,
            salt,
        }))
    }

    pub fn get_block(&self, hash: &Digest) -> Result<Block, ServiceError> {
        self.chain()
            .block_by_hash(hash)
            .cloned()
            .ok_or_else(|| refuse(ErrorKind::NotFound, format!("no block {hash}")))
    }

    pub fn chain_head(&self) -> BlockHeader {
        self.chain().tip().header.clone()
    }

    pub fn blocks_from(&self, height: u64) -> Vec<Block> {
        let chain = self.chain();
        chain
            .blocks()
            .iter()
            .skip(height as usize)
            .take(MAX_BLOCKS_PER_RESPONSE)
            .cloned()
            .collect()
    }

    /// Appends a block received from a peer authority. Returns the new height.
    pub fn accept_block(&self, requester: &ActorId, block: Block, now: Timestamp) -> Result<u64, ServiceError> {
        if requester.role != Role::Hsa {
            return Err(refuse(
                ErrorKind::Forbidden,
                format!("a {} may not push blocks", requester.role),
            ));
        }
        self.append(block, now)
    }

    fn append(&self, block: Block, now: Timestamp) -> Result<u64, ServiceError> {
        let mut w = self.writer();
        if let Some(known) = self.chain().block_by_hash(&block.hash()) {
            return Ok(known.height());
        }
        self.chain()
            .validate_block(&block, now)
            .map_err(|e| refuse(ErrorKind::Rejected, e.to_string()))?;
        w.log.append(&block)?;
        w.forget_included(&block);
        let height = block.height();
        self.chain
            .write()
            .expect("chain lock poisoned")
            .append_block(block, now)
            .expect("validated under the writer lock");
        Ok(height)
    }

    /// If this node is the scheduled authority and has pending records,
    /// proposes, persists and applies the next block.
    pub fn tick(&self, now: Timestamp) -> Result<Option<Block>, ServiceError> {
        if self.identity.role() != Role::Hsa {
            return Ok(None);
        }
        let block = {
            let w = self.writer();
            let chain = self.chain();
            if w.mempool.is_empty() || chain.next_proposer() != self.identity.owner() {
                return Ok(None);
            }
            let batch: Vec<_> = w
                .mempool
                .values()
                .take(chain.config().max_block_records)
                .map(|p| p.record.clone())
                .collect();
            let at = now.max(chain.tip().header.block_time);
            propose_block(&chain, &batch, &self.identity, at)
                .map_err(|e| refuse(ErrorKind::Internal, e.to_string()))?
        };
        self.append(block.clone(), now)?;
        Ok(Some(block))
    }

    /// Runs a verification on this member node and persists the receipt.
    pub fn verify(
        &self,
        requester: &ActorId,
        token: &DhpToken,
        doc: &TravelDocument,
        at: Timestamp,
    ) -> Result<(VerificationOutcome, VerificationReceipt), ServiceError> {
        let Some(receipts) = &self.receipts else {
            return Err(refuse(ErrorKind::Forbidden, "verification runs on member nodes"));
        };
        if requester.role != Role::Bm {
            return Err(refuse(
                ErrorKind::Forbidden,
                format!("a {} may not request verification", requester.role),
            ));
        }
        let (outcome, receipt) = bm_verify(&self.identity, &self.chain(), token, doc, &self.policy, at)
            .map_err(|e| refuse(ErrorKind::Internal, e.to_string()))?;
        receipts.lock().expect("receipt lock poisoned").append(&receipt)?;
        Ok((outcome, receipt))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::keygen;
    use crate::protocol::{thf_issue, OutcomeStatus};
    use crate::registry::Member;
    use crate::types::TestMethod;

    const T0: Timestamp = Timestamp(1_700_000_000);

    struct Fx {
        _dir: tempfile::TempDir,
        hsa: Node,
        bm: Node,
        thf: KeyPair,
        stranger: KeyPair,
    }

    fn fx() -> Fx {
        let dir = tempfile::tempdir().unwrap();
        let hsa = keygen(Role::Hsa, Some([1; 32]));
        let thf = keygen(Role::Thf, Some([2; 32]));
        let bm = keygen(Role::Bm, Some([3; 32]));
        let mut reg = Registry::new();
        reg.add(hsa.owner().clone()).unwrap();
        reg.add_member(Member { actor: thf.owner().clone(), home: Some(hsa.id()) }).unwrap();
        reg.add(bm.owner().clone()).unwrap();
        let open = |key: KeyPair, name: &str| {
            let rec = BlockLog::open_or_create(&dir.path().join(format!("{name}.log")), &reg, T0, LedgerConfig::default(), T0).unwrap();
            let receipts = (key.role() == Role::Bm).then(|| ReceiptLog::open(&dir.path().join("r.log")).unwrap());
            Node::from_parts(key, reg.clone(), HygienePolicy::default(), rec.log, rec.chain, receipts).unwrap()
        };
        Fx {
            hsa: open(hsa, "hsa"),
            bm: open(bm, "bm"),
            thf,
            stranger: keygen(Role::Thf, Some([9; 32])),
            _dir: dir,
        }
    }

    fn pending(thf: &KeyPair, n: u32) -> (TravelDocument, PendingDhp) {
        let doc = TravelDocument::parse(&format!("NODE{n:05}:ESP:2031-02-02")).unwrap();
        let p = thf_issue(thf, &doc, true, TestMethod::new("RT-qPCR").unwrap(), T0, T0).unwrap();
        (doc, p)
    }

    #[test]
    fn submit_tick_query_verify() {
        let f = fx();
        let thf = f.thf.owner().clone();
        let (doc, p) = pending(&f.thf, 1);
        let (ack, dup) = f.hsa.submit_dhp(&thf, p.clone(), T0).unwrap();
        assert!(!dup);
        assert_eq!(f.hsa.submit_dhp(&thf, p, T0).unwrap(), (ack, true));
        assert_eq!(f.hsa.query_token(&thf, ack).unwrap(), None);
        let block = f.hsa.tick(T0).unwrap().expect("scheduled with work");
        assert_eq!(f.hsa.tick(T0).unwrap(), None);
        let token = f.hsa.query_token(&thf, ack).unwrap().expect("included");
        let hsa_actor = f.hsa.identity().owner().clone();
        assert_eq!(f.bm.accept_block(&hsa_actor, block, T0).unwrap(), 1);
        let bm_actor = f.bm.identity().owner().clone();
        let (outcome, receipt) = f.bm.verify(&bm_actor, &token, &doc, T0.plus(60)).unwrap();
        assert_eq!(outcome.status, OutcomeStatus::Valid);
        assert_eq!(receipt.outcome_status, OutcomeStatus::Valid);
        let other = TravelDocument::parse("NODE99999:ESP:2031-02-02").unwrap();
        assert_eq!(f.bm.verify(&bm_actor, &token, &other, T0).unwrap().0.status, OutcomeStatus::CommitmentMismatch);
    }

    #[test]
    fn member_credentials_never_append() {
        let f = fx();
        let bm = f.bm.identity().owner().clone();
        let (_, p) = pending(&f.thf, 2);
        let thf = f.thf.owner().clone();
        f.hsa.submit_dhp(&thf, p.clone(), T0).unwrap();
        let block = f.hsa.tick(T0).unwrap().unwrap();
        for resp in [
            f.hsa.handle(&bm.id, Request::SubmitDhp(p.clone()), T0),
            f.bm.handle(&bm.id, Request::SubmitDhp(p), T0),
            f.bm.handle(&bm.id, Request::PushBlock(block.clone()), T0),
        ] {
            assert!(matches!(resp, Response::Error { kind: ErrorKind::Forbidden, .. }), "{resp:?}");
        }
        assert_eq!(f.bm.height(), 0);
        assert_eq!(f.hsa.height(), 1);
        assert_eq!(f.hsa.mempool_len(), 0);
    }

    #[test]
    fn unknown_and_mismatched_issuers_are_refused() {
        let f = fx();
        let resp = f.hsa.handle(&f.stranger.id(), Request::GetChainHead, T0);
        assert!(matches!(resp, Response::Error { kind: ErrorKind::Unauthorized, .. }));
        let (_, p) = pending(&f.stranger, 3);
        let resp = f.hsa.handle(&f.thf.id(), Request::SubmitDhp(p), T0);
        assert!(matches!(resp, Response::Error { kind: ErrorKind::Rejected, .. }), "{resp:?}");
        let (_, mut p) = pending(&f.thf, 4);
        p.record.tested_at = p.record.tested_at.plus(1);
        let resp = f.hsa.handle(&f.thf.id(), Request::SubmitDhp(p), T0);
        assert!(matches!(resp, Response::Error { kind: ErrorKind::Rejected, .. }));
    }

    #[test]
    fn reads_are_available_to_every_member() {
        let f = fx();
        let bm = f.bm.identity().id();
        let Response::Head(h) = f.hsa.handle(&bm, Request::GetChainHead, T0) else { panic!() };
        assert_eq!(h.height, 0);
        let resp = f.hsa.handle(&bm, Request::GetBlock(Digest([0; 32])), T0);
        assert!(matches!(resp, Response::Error { kind: ErrorKind::NotFound, .. }));
        let Response::Blocks(b) = f.hsa.handle(&bm, Request::GetBlocksFrom(0), T0) else { panic!() };
        assert_eq!(b.len(), 1);
    }
}
