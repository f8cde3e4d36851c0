//! Request/response messages over a reliable byte stream.
//!
//! Every message is a frame: `u32 BE length ‖ type byte ‖ body`. Bodies reuse
//! the ledger's canonical encodings. A connection opens with a
//! challenge-response handshake in which the client proves control of a
//! registered member key.

use std::io::{self, Read, Write};

use crate::crypto::hash_parts;
use crate::ledger::{Block, BlockHeader, DhpToken, RecordLocation};
use crate::protocol::{OutcomeStatus, PendingDhp, VerificationOutcome, VerificationReceipt, ViolationReason};
use crate::types::{
    Digest, EncodingError, MemberId, Reader, Signature, Timestamp, TravelDocument,
};

pub const MAX_FRAME_LEN: usize = 64 << 20;
const AUTH_TAG: &[u8] = b"DHPAUTH1|";

pub fn write_frame<W: Write>(w: &mut W, payload: &[u8]) -> io::Result<()> {
    let len = u32::try_from(payload.len())
        .ok()
        .filter(|&l| l as usize <= MAX_FRAME_LEN)
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "frame too large"))?;
    w.write_all(&len.to_be_bytes())?;
    w.write_all(payload)?;
    w.flush()
}

pub fn read_frame<R: Read>(r: &mut R) -> io::Result<Vec<u8>> {
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_FRAME_LEN {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "frame too large"));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

/// Class of a refused request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorKind {
    BadRequest,
    Unauthorized,
    Forbidden,
    NotFound,
    Rejected,
    Internal,
}

impl ErrorKind {
    pub fn code(self) -> u8 {
        match self {
            ErrorKind::BadRequest => 1,
            ErrorKind::Unauthorized => 2,
            ErrorKind::Forbidden => 3,
            ErrorKind::NotFound => 4,
            ErrorKind::Rejected => 5,
            ErrorKind::Internal => 6,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            1 => ErrorKind::BadRequest,
            2 => ErrorKind::Unauthorized,
            3 => ErrorKind::Forbidden,
            4 => ErrorKind::NotFound,
            5 => ErrorKind::Rejected,
            6 => ErrorKind::Internal,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Request {
    SubmitDhp(PendingDhp),
    QueryToken(u64),
    GetBlock(Digest),
    GetChainHead,
    GetBlocksFrom(u64),
    PushBlock(Block),
    Verify {
        token: DhpToken,
        doc: TravelDocument,
        at: Timestamp,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Response {
    /// `duplicate` is set when the record was already known; `ack_id` then
    /// names the original submission.
    Ack { ack_id: u64, duplicate: bool },
    Token(Option<DhpToken>),
    Block(Block),
    Head(BlockHeader),
    Blocks(Vec<Block>),
    Pushed { height: u64 },
    Verified {
        outcome: VerificationOutcome,
        receipt: VerificationReceipt,
    },
    Error { kind: ErrorKind, message: String },
}

impl Response {
    pub fn error(kind: ErrorKind, message: impl Into<String>) -> Self {
        Response::Error {
            kind,
            message: message.into(),
        }
    }
}

fn u32_prefixed(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
    out.extend_from_slice(bytes);
}

impl Request {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        match self {
            Request::SubmitDhp(p) => {
                out.push(0x01);
                out.extend_from_slice(&p.to_frame());
            }
            Request::QueryToken(id) => {
                out.push(0x02);
                out.extend_from_slice(&id.to_be_bytes());
            }
            Request::GetBlock(h) => {
                out.push(0x03);
                out.extend_from_slice(h.as_bytes());
            }
            Request::GetChainHead => out.push(0x04),
            Request::GetBlocksFrom(h) => {
                out.push(0x05);
                out.extend_from_slice(&h.to_be_bytes());
            }
            Request::PushBlock(b) => {
                out.push(0x06);
                out.extend_from_slice(&b.canonical_bytes());
            }
            Request::Verify { token, doc, at } => {
                out.push(0x07);
                out.extend_from_slice(&token.to_bytes());
                out.extend_from_slice(&at.0.to_be_bytes());
                out.extend_from_slice(&doc.canonical_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, EncodingError> {
        let (&kind, body) = bytes.split_first().ok_or(EncodingError::BadTag)?;
        let mut r = Reader::new(body);
        let req = match kind {
            0x01 => return Ok(Request::SubmitDhp(PendingDhp::from_frame(body)?)),
            0x02 => Request::QueryToken(r.u64()?),
            0x03 => Request::GetBlock(Digest(r.array()?)),
            0x04 => Request::GetChainHead,
            0x05 => Request::GetBlocksFrom(r.u64()?),
            0x06 => return Ok(Request::PushBlock(Block::from_canonical_bytes(body)?)),
            0x07 => {
                let token = DhpToken::from_bytes(r.take(DhpToken::ENCODED_LEN)?)?;
                let at = Timestamp(r.u64()?);
                let doc = TravelDocument::from_canonical_bytes(r.take(r.remaining())?)?;
                Request::Verify { token, doc, at }
            }
            _ => return Err(EncodingError::BadTag),
        };
        r.finish()?;
        Ok(req)
    }

    /// Whether serving this request may modify chain state.
    pub fn is_write(&self) -> bool {
        matches!(self, Request::SubmitDhp(_) | Request::PushBlock(_))
    }
}

impl Response {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        match self {
            Response::Ack { ack_id, duplicate } => {
                out.push(0x81);
                out.extend_from_slice(&ack_id.to_be_bytes());
                out.push(*duplicate as u8);
            }
            Response::Token(t) => {
                out.push(0x82);
                if let Some(t) = t {
                    out.extend_from_slice(&t.to_bytes());
                }
            }
            Response::Block(b) => {
                out.push(0x83);
                out.extend_from_slice(&b.canonical_bytes());
            }
            Response::Head(h) => {
                out.push(0x84);
                out.extend_from_slice(&h.canonical_bytes());
            }
            Response::Blocks(blocks) => {
                out.push(0x85);
                out.extend_from_slice(&(blocks.len() as u32).to_be_bytes());
                for b in blocks {
                    u32_prefixed(&mut out, &b.canonical_bytes());
                }
            }
            Response::Pushed { height } => {
                out.push(0x86);
                out.extend_from_slice(&height.to_be_bytes());
            }
            Response::Verified { outcome, receipt } => {
                out.push(0x87);
                out.push(outcome.status.code());
                out.push(outcome.violation.map_or(0, ViolationReason::code));
                match outcome.location {
                    Some(loc) => {
                        out.push(1);
                        out.extend_from_slice(&loc.height.to_be_bytes());
                        out.extend_from_slice(&loc.index.to_be_bytes());
                    }
                    None => out.push(0),
                }
                out.extend_from_slice(&outcome.checked_at.0.to_be_bytes());
                out.extend_from_slice(&receipt.canonical_bytes());
            }
            Response::Error { kind, message } => {
                out.push(0xFF);
                out.push(kind.code());
                out.extend_from_slice(message.as_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, EncodingError> {
        let (&kind, body) = bytes.split_first().ok_or(EncodingError::BadTag)?;
        let mut r = Reader::new(body);
        let resp = match kind {
            0x81 => Response::Ack {
                ack_id: r.u64()?,
                duplicate: match r.u8()? {
                    0 => false,
                    1 => true,
                    _ => return Err(EncodingError::InvalidValue("duplicate flag")),
                },
            },
            0x82 if body.is_empty() => Response::Token(None),
            0x82 => return Ok(Response::Token(Some(DhpToken::from_bytes(body)?))),
            0x83 => return Ok(Response::Block(Block::from_canonical_bytes(body)?)),
            0x84 => return Ok(Response::Head(BlockHeader::from_canonical_bytes(body)?)),
            0x85 => {
                let count = r.u32()? as usize;
                if count > r.remaining() / 4 {
                    return Err(EncodingError::InvalidValue("block count"));
                }
                let mut blocks = Vec::with_capacity(count);
                for _ in 0..count {
                    let len = r.u32()? as usize;
                    blocks.push(Block::from_canonical_bytes(r.take(len)?)?);
                }
                Response::Blocks(blocks)
            }
            0x86 => Response::Pushed { height: r.u64()? },
            0x87 => {
                let status = OutcomeStatus::from_code(r.u8()?)
                    .ok_or(EncodingError::InvalidValue("outcome status"))?;
                let violation = match r.u8()? {
                    0 => None,
                    c => Some(
                        ViolationReason::from_code(c)
                            .ok_or(EncodingError::InvalidValue("violation reason"))?,
                    ),
                };
                let location = match r.u8()? {
                    0 => None,
                    1 => Some(RecordLocation {
                        height: r.u64()?,
                        index: r.u32()?,
                    }),
                    _ => return Err(EncodingError::InvalidValue("location flag")),
                };
                let checked_at = Timestamp(r.u64()?);
                let receipt = VerificationReceipt::from_canonical_bytes(
                    r.take(VerificationReceipt::ENCODED_LEN)?,
                )?;
                Response::Verified {
                    outcome: VerificationOutcome {
                        status,
                        violation,
                        location,
                        checked_at,
                    },
                    receipt,
                }
            }
            0xFF => {
                let kind = ErrorKind::from_code(r.u8()?)
                    .ok_or(EncodingError::InvalidValue("error kind"))?;
                let message = String::from_utf8_lossy(r.take(r.remaining())?).into_owned();
                Response::Error { kind, message }
            }
            _ => return Err(EncodingError::BadTag),
        };
        r.finish()?;
        Ok(resp)
    }
}

/// Server greeting: a fresh nonce and the server's member id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Challenge {
    pub nonce: [u8; 32],
    pub server: MemberId,
}

impl Challenge {
    pub fn to_bytes(&self) -> Vec<u8> {
        [&[0x10][..], &self.nonce, self.server.as_bytes()].concat()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, EncodingError> {
        let mut r = Reader::new(bytes);
        if r.u8()? != 0x10 {
            return Err(EncodingError::BadTag);
        }
        let c = Challenge {
            nonce: r.array()?,
            server: MemberId(r.array()?),
        };
        r.finish()?;
        Ok(c)
    }

    /// What the client signs: binds the nonce, both parties, and a domain tag.
    pub fn signing_bytes(&self, client: &MemberId) -> Vec<u8> {
        hash_parts(&[AUTH_TAG, &self.nonce, self.server.as_bytes(), client.as_bytes()])
            .as_bytes()
            .to_vec()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AuthResponse {
    pub member: MemberId,
    pub signature: Signature,
}

impl AuthResponse {
    pub fn to_bytes(&self) -> Vec<u8> {
        [&[0x11][..], self.member.as_bytes(), self.signature.as_bytes()].concat()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, EncodingError> {
        let mut r = Reader::new(bytes);
        if r.u8()? != 0x11 {
            return Err(EncodingError::BadTag);
        }
        let a = AuthResponse {
            member: MemberId(r.array()?),
            signature: Signature(r.array()?),
        };
        r.finish()?;
        Ok(a)
    }
}

/// Sent by the server once the client is authenticated.
pub const AUTH_OK: [u8; 1] = [0x12];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::keygen;
    use crate::protocol::thf_issue;
    use crate::types::{Role, TestMethod};

    fn sample_block() -> Block {
        let hsa = keygen(Role::Hsa, Some([1; 32]));
        let thf = keygen(Role::Thf, Some([2; 32]));
        let chain = crate::ChainState::new(vec![hsa.owner().clone()], [thf.owner().clone()], Timestamp(1_000), Default::default()).unwrap();
        let doc = TravelDocument::parse("WIRE0001:ITA:2030-05-05").unwrap();
        let p = thf_issue(&thf, &doc, true, TestMethod::new("RAT").unwrap(), Timestamp(2_000), Timestamp(2_000)).unwrap();
        crate::ledger::propose_block(&chain, &[p.record], &hsa, Timestamp(2_000)).unwrap()
    }

    #[test]
    fn requests_round_trip() {
        let thf = keygen(Role::Thf, Some([2; 32]));
        let doc = TravelDocument::parse("WIRE0001:ITA:2030-05-05").unwrap();
        let p = thf_issue(&thf, &doc, true, TestMethod::new("RAT").unwrap(), Timestamp(2_000), Timestamp(2_000)).unwrap();
        let token = DhpToken::from_bytes(&[9; 52]).unwrap();
        for req in [
            Request::SubmitDhp(p),
            Request::QueryToken(77),
            Request::GetBlock(Digest([3; 32])),
            Request::GetChainHead,
            Request::GetBlocksFrom(5),
            Request::PushBlock(sample_block()),
            Request::Verify { token, doc, at: Timestamp(99) },
        ] {
            assert_eq!(Request::from_bytes(&req.to_bytes()).unwrap(), req);
        }
    }

    #[test]
    fn responses_round_trip() {
        let bm = keygen(Role::Bm, Some([4; 32]));
        let token = DhpToken::from_bytes(&[9; 52]).unwrap();
        let block = sample_block();
        let receipt = VerificationReceipt::sign(&bm, &token, OutcomeStatus::PolicyViolation, Timestamp(5));
        for resp in [
            Response::Ack { ack_id: 3, duplicate: true },
            Response::Token(None),
            Response::Token(Some(token)),
            Response::Block(block.clone()),
            Response::Head(block.header.clone()),
            Response::Blocks(vec![block.clone(), block]),
            Response::Blocks(vec![]),
            Response::Pushed { height: 4 },
            Response::Verified {
                outcome: VerificationOutcome {
                    status: OutcomeStatus::PolicyViolation,
                    violation: Some(ViolationReason::TestTooOld),
                    location: Some(RecordLocation { height: 1, index: 0 }),
                    checked_at: Timestamp(5),
                },
                receipt,
            },
            Response::error(ErrorKind::Forbidden, "no"),
        ] {
            assert_eq!(Response::from_bytes(&resp.to_bytes()).unwrap(), resp);
        }
    }

    #[test]
    fn malformed_messages_are_rejected() {
        assert!(Request::from_bytes(&[]).is_err());
        assert!(Request::from_bytes(&[0x42]).is_err());
        assert!(Request::from_bytes(&[0x02, 0, 0]).is_err());
        assert!(Request::from_bytes(&[0x04, 0]).is_err());
        assert!(Response::from_bytes(&[0x81, 0, 0, 0, 0, 0, 0, 0, 1, 2]).is_err());
        assert!(Challenge::from_bytes(&[0x10; 10]).is_err());
    }

    #[test]
    fn frames_round_trip_over_a_stream() {
        let mut buf = Vec::new();
        write_frame(&mut buf, b"hello").unwrap();
        write_frame(&mut buf, b"").unwrap();
        let mut cur = io::Cursor::new(buf);
        assert_eq!(read_frame(&mut cur).unwrap(), b"hello");
        assert_eq!(read_frame(&mut cur).unwrap(), b"");
        assert!(read_frame(&mut cur).is_err());
    }
}
