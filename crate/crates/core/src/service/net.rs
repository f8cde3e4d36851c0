use std::io::ErrorKind as IoKind;
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use rand::rngs::OsRng;
use rand::RngCore;

use crate::crypto::{verify_sig, KeyPair};
use crate::ledger::{Block, BlockHeader, DhpToken};
use crate::protocol::{PendingDhp, VerificationOutcome, VerificationReceipt};
use crate::types::{Digest, MemberId, Role, Timestamp, TravelDocument};

use super::config::NodeConfig;
use super::node::Node;
use super::wire::{
    read_frame, write_frame, AuthResponse, Challenge, ErrorKind, Request, Response, AUTH_OK,
};
use super::ServiceError;

const ACCEPT_POLL: Duration = Duration::from_millis(10);

/// Runs the handshake, then answers requests until the peer hangs up.
pub fn serve_connection(node: &Node, mut stream: TcpStream) -> Result<(), ServiceError> {
    stream.set_nodelay(true)?;
    let mut nonce = [0u8; 32];
    OsRng.fill_bytes(&mut nonce);
    let challenge = Challenge {
        nonce,
        server: node.identity().id(),
    };
    write_frame(&mut stream, &challenge.to_bytes())?;
    let member = match AuthResponse::from_bytes(&read_frame(&mut stream)?) {
        Ok(auth) => {
            let signed = node.registry().actor(&auth.member).is_some_and(|a| {
                verify_sig(
                    a.public_key.as_bytes(),
                    &challenge.signing_bytes(&auth.member),
                    auth.signature.as_bytes(),
                )
            });
            signed.then_some(auth.member)
        }
        Err(_) => None,
    };
    let Some(member) = member else {
        let refusal = Response::error(ErrorKind::Unauthorized, "authentication failed");
        write_frame(&mut stream, &refusal.to_bytes())?;
        return Ok(());
    };
    write_frame(&mut stream, &AUTH_OK)?;
    loop {
        let frame = match read_frame(&mut stream) {
            Ok(f) => f,
            Err(e) if e.kind() == IoKind::UnexpectedEof => return Ok(()),
            Err(e) => return Err(e.into()),
        };
        let response = match Request::from_bytes(&frame) {
            Ok(req) => node.handle(&member, req, Timestamp::now()),
            Err(e) => Response::error(ErrorKind::BadRequest, e.to_string()),
        };
        write_frame(&mut stream, &response.to_bytes())?;
    }
}

/// A listening node. Dropping it stops accepting new connections.
pub struct Server {
    addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl Server {
    pub fn start(node: Arc<Node>, listen: impl ToSocketAddrs) -> Result<Self, ServiceError> {
        let listener = TcpListener::bind(listen)?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let shutdown = Arc::new(AtomicBool::new(false));
        let stop = shutdown.clone();
        let thread = thread::spawn(move || {
            while !stop.load(Ordering::Relaxed) {
                match listener.accept() {
                    Ok((stream, peer)) => {
                        let node = node.clone();
                        thread::spawn(move || {
                            let served = stream
                                .set_nonblocking(false)
                                .map_err(ServiceError::from)
                                .and_then(|()| serve_connection(&node, stream));
                            if let Err(e) = served {
                                log::debug!("connection from {peer}: {e}");
                            }
                        });
                    }
                    Err(e) if e.kind() == IoKind::WouldBlock => thread::sleep(ACCEPT_POLL),
                    Err(e) => log::warn!("accept failed: {e}"),
                }
            }
        });
        Ok(Self {
            addr,
            shutdown,
            thread: Some(thread),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn stop(mut self) {
        self.halt();
    }

    fn halt(&mut self) {
        self.shutdown.store(true, Ordering::Relaxed);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        self.halt();
    }
}

/// An authenticated connection to a node.
pub struct Client {
    stream: TcpStream,
    server: MemberId,
}

fn unexpected(resp: Response) -> ServiceError {
    match resp {
        Response::Error { kind, message } => ServiceError::Refused { kind, message },
        other => ServiceError::Protocol(format!("unexpected response {other:?}")),
    }
}

impl Client {
    pub fn connect(addr: impl ToSocketAddrs, identity: &KeyPair) -> Result<Self, ServiceError> {
        let mut stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let challenge = Challenge::from_bytes(&read_frame(&mut stream)?)?;
        let member = identity.id();
        let auth = AuthResponse {
            member,
            signature: identity.sign(&challenge.signing_bytes(&member)),
        };
        write_frame(&mut stream, &auth.to_bytes())?;
        let reply = read_frame(&mut stream)?;
        if reply != AUTH_OK {
            return Err(unexpected(Response::from_bytes(&reply)?));
        }
        Ok(Self {
            stream,
            server: challenge.server,
        })
    }

    /// The member id the server announced during the handshake.
    pub fn server_id(&self) -> MemberId {
        self.server
    }

    /// Sends one request. Error responses come back as `Ok(Response::Error)`.
    pub fn call(&mut self, request: &Request) -> Result<Response, ServiceError> {
        write_frame(&mut self.stream, &request.to_bytes())?;
        Ok(Response::from_bytes(&read_frame(&mut self.stream)?)?)
    }

    pub fn submit_dhp(&mut self, pending: &PendingDhp) -> Result<(u64, bool), ServiceError> {
        match self.call(&Request::SubmitDhp(pending.clone()))? {
            Response::Ack { ack_id, duplicate } => Ok((ack_id, duplicate)),
            other => Err(unexpected(other)),
        }
    }

    pub fn query_token(&mut self, ack_id: u64) -> Result<Option<DhpToken>, ServiceError> {
        match self.call(&Request::QueryToken(ack_id))? {
            Response::Token(t) => Ok(t),
            other => Err(unexpected(other)),
        }
    }

    pub fn get_block(&mut self, hash: &Digest) -> Result<Block, ServiceError> {
        match self.call(&Request::GetBlock(*hash))? {
            Response::Block(b) => Ok(b),
            other => Err(unexpected(other)),
        }
    }

    pub fn get_chain_head(&mut self) -> Result<BlockHeader, ServiceError> {
        match self.call(&Request::GetChainHead)? {
            Response::Head(h) => Ok(h),
            other => Err(unexpected(other)),
        }
    }

    pub fn get_blocks_from(&mut self, height: u64) -> Result<Vec<Block>, ServiceError> {
        match self.call(&Request::GetBlocksFrom(height))? {
            Response::Blocks(b) => Ok(b),
            other => Err(unexpected(other)),
        }
    }

    pub fn push_block(&mut self, block: &Block) -> Result<u64, ServiceError> {
        match self.call(&Request::PushBlock(block.clone()))? {
            Response::Pushed { height } => Ok(height),
            other => Err(unexpected(other)),
        }
    }

    pub fn verify(
        &mut self,
        token: &DhpToken,
        doc: &TravelDocument,
        at: Timestamp,
    ) -> Result<(VerificationOutcome, VerificationReceipt), ServiceError> {
        let req = Request::Verify {
            token: *token,
            doc: doc.clone(),
            at,
        };
        match self.call(&req)? {
            Response::Verified { outcome, receipt } => Ok((outcome, receipt)),
            other => Err(unexpected(other)),
        }
    }
}

/// Brings `node` and the peer behind `client` to the same height: pushes
/// blocks the peer lacks and pulls blocks this node lacks. Blocks are only
/// pulled from authority peers.
pub fn sync_with_peer(node: &Node, client: &mut Client, now: Timestamp) -> Result<(), ServiceError> {
    let head = client.get_chain_head()?;
    let mine = node.height();
    if head.height < mine && node.chain().contains_block(&head.hash()) {
        for b in node.blocks_from(head.height + 1) {
            client.push_block(&b)?;
        }
        return Ok(());
    }
    let peer = match node.registry().actor(&client.server_id()) {
        Some(a) if a.role == Role::Hsa => a.clone(),
        _ => return Ok(()),
    };
    let mut next = mine + 1;
    while next <= head.height {
        let blocks = client.get_blocks_from(next)?;
        if blocks.is_empty() {
            break;
        }
        for b in blocks {
            next = node.accept_block(&peer, b, now)? + 1;
        }
    }
    Ok(())
}

/// The daemon's background loop: authorities propose when scheduled, and
/// every node syncs with its peers, once per `block_interval_ms`.
pub fn run_node(node: Arc<Node>, config: &NodeConfig, shutdown: Arc<AtomicBool>) {
    let interval = Duration::from_millis(config.block_interval_ms.max(1));
    while !shutdown.load(Ordering::Relaxed) {
        let now = Timestamp::now();
        match node.tick(now) {
            Ok(Some(b)) => log::info!("proposed block {} at height {}", b.hash(), b.height()),
            Ok(None) => {}
            Err(e) => log::warn!("proposal failed: {e}"),
        }
        for peer in &config.peer_addresses {
            let synced = Client::connect(peer.as_str(), node.identity())
                .and_then(|mut c| sync_with_peer(&node, &mut c, now));
            if let Err(e) = synced {
                log::debug!("sync with {peer}: {e}");
            }
        }
        thread::sleep(interval);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::keygen;
    use crate::ledger::LedgerConfig;
    use crate::protocol::{thf_issue, OutcomeStatus};
    use crate::registry::Registry;
    use crate::service::storage::{BlockLog, ReceiptLog};
    use crate::types::{HygienePolicy, TestMethod};

    fn node(dir: &std::path::Path, key: KeyPair, reg: &Registry) -> Arc<Node> {
        let now = Timestamp::now();
        let rec = BlockLog::open_or_create(&dir.join(format!("{}.log", key.id())), reg, Timestamp(1_000), LedgerConfig::default(), now).unwrap();
        let receipts = (key.role() == Role::Bm).then(|| ReceiptLog::open(&dir.join("receipts.log")).unwrap());
        Arc::new(Node::from_parts(key, reg.clone(), HygienePolicy::default(), rec.log, rec.chain, receipts).unwrap())
    }

    #[test]
    fn tcp_round_trip_with_sync() {
        let dir = tempfile::tempdir().unwrap();
        let hsa = keygen(Role::Hsa, Some([1; 32]));
        let thf = keygen(Role::Thf, Some([2; 32]));
        let bm = keygen(Role::Bm, Some([3; 32]));
        let mut reg = Registry::new();
        for k in [&hsa, &thf, &bm] {
            reg.add(k.owner().clone()).unwrap();
        }
        let hsa_node = node(dir.path(), hsa.clone(), &reg);
        let bm_node = node(dir.path(), bm.clone(), &reg);
        let hsa_srv = Server::start(hsa_node.clone(), "127.0.0.1:0").unwrap();
        let bm_srv = Server::start(bm_node.clone(), "127.0.0.1:0").unwrap();

        let now = Timestamp::now();
        let doc = TravelDocument::parse("TCP00001:NLD:2030-01-01").unwrap();
        let p = thf_issue(&thf, &doc, true, TestMethod::new("RT-qPCR").unwrap(), now, now).unwrap();
        let mut c = Client::connect(hsa_srv.local_addr(), &thf).unwrap();
        let (ack, dup) = c.submit_dhp(&p).unwrap();
        assert!(!dup);
        assert_eq!(c.submit_dhp(&p).unwrap(), (ack, true));
        assert_eq!(c.query_token(ack).unwrap(), None);
        hsa_node.tick(now).unwrap().unwrap();
        let token = c.query_token(ack).unwrap().unwrap();

        let mut to_bm = Client::connect(bm_srv.local_addr(), &hsa).unwrap();
        sync_with_peer(&hsa_node, &mut to_bm, now).unwrap();
        assert_eq!(bm_node.height(), 1);

        let mut v = Client::connect(bm_srv.local_addr(), &bm).unwrap();
        let (outcome, receipt) = v.verify(&token, &doc, now).unwrap();
        assert_eq!(outcome.status, OutcomeStatus::Valid);
        assert!(receipt.verify(bm.public().as_bytes()));
        assert_eq!(v.get_chain_head().unwrap().height, 1);
        assert!(matches!(
            v.get_block(&Digest([7; 32])),
            Err(ServiceError::Refused { kind: ErrorKind::NotFound, .. })
        ));
        assert!(matches!(
            v.push_block(&hsa_node.blocks_from(1)[0]),
            Err(ServiceError::Refused { kind: ErrorKind::Forbidden, .. })
        ));
    }

    #[test]
    fn non_members_fail_the_handshake() {
        let dir = tempfile::tempdir().unwrap();
        let hsa = keygen(Role::Hsa, Some([1; 32]));
        let mut reg = Registry::new();
        reg.add(hsa.owner().clone()).unwrap();
        let srv = Server::start(node(dir.path(), hsa, &reg), "127.0.0.1:0").unwrap();
        let outsider = keygen(Role::Thf, Some([8; 32]));
        assert!(matches!(
            Client::connect(srv.local_addr(), &outsider),
            Err(ServiceError::Refused { kind: ErrorKind::Unauthorized, .. })
        ));
    }
}
