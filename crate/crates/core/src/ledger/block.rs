use crate::crypto::{hash_parts, Salt};
use crate::types::{Digest, EncodingError, HealthPassport, MemberId, Reader, Signature, Timestamp};

use super::merkle::empty_root;

pub const HEADER_TAG: &[u8] = b"DHPH1|";

/// Block header. The authority signs [`BlockHeader::signing_bytes`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BlockHeader {
    pub height: u64,
    pub prev_hash: Digest,
    pub merkle_root: Digest,
    pub authority: MemberId,
    pub block_time: Timestamp,
    pub authority_signature: Signature,
}

impl BlockHeader {
    /// `"DHPH1|" ‖ u64 height ‖ prev ‖ root ‖ authority ‖ u64 time`.
    pub fn signing_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_TAG.len() + 8 + 32 + 32 + 16 + 8);
        out.extend_from_slice(HEADER_TAG);
        out.extend_from_slice(&self.height.to_be_bytes());
        out.extend_from_slice(self.prev_hash.as_bytes());
        out.extend_from_slice(self.merkle_root.as_bytes());
        out.extend_from_slice(self.authority.as_bytes());
        out.extend_from_slice(&self.block_time.0.to_be_bytes());
        out
    }

    pub fn hash(&self) -> Digest {
        header_hash(self)
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = self.signing_bytes();
        out.extend_from_slice(self.authority_signature.as_bytes());
        out
    }

    pub fn from_canonical_bytes(bytes: &[u8]) -> Result<Self, EncodingError> {
        let mut r = Reader::new(bytes);
        let h = Self::read(&mut r)?;
        r.finish()?;
        Ok(h)
    }

    fn read(r: &mut Reader<'_>) -> Result<Self, EncodingError> {
        if r.take(HEADER_TAG.len())? != HEADER_TAG {
            return Err(EncodingError::BadTag);
        }
        Ok(Self {
            height: r.u64()?,
            prev_hash: Digest(r.array()?),
            merkle_root: Digest(r.array()?),
            authority: MemberId(r.array()?),
            block_time: Timestamp(r.u64()?),
            authority_signature: Signature(r.array()?),
        })
    }
}

/// Hash of the header bytes, signature excluded.
pub fn header_hash(header: &BlockHeader) -> Digest {
    hash_parts(&[&header.signing_bytes()])
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Block {
    pub header: BlockHeader,
    pub records: Vec<HealthPassport>,
}

impl Block {
    /// The unsigned genesis block every node derives from the first authority
    /// and the consortium start time.
    pub fn genesis(first_authority: MemberId, genesis_time: Timestamp) -> Self {
        Block {
            header: BlockHeader {
                height: 0,
                prev_hash: Digest::ZERO,
                merkle_root: empty_root(),
                authority: first_authority,
                block_time: genesis_time,
                authority_signature: Signature([0; 64]),
            },
            records: Vec::new(),
        }
    }

    pub fn hash(&self) -> Digest {
        self.header.hash()
    }

    pub fn height(&self) -> u64 {
        self.header.height
    }

    /// Header bytes ‖ u32 record count ‖ records.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = self.header.canonical_bytes();
        out.extend_from_slice(&(self.records.len() as u32).to_be_bytes());
        for r in &self.records {
            out.extend_from_slice(&r.canonical_bytes());
        }
        out
    }

    pub fn from_canonical_bytes(bytes: &[u8]) -> Result<Self, EncodingError> {
        let mut r = Reader::new(bytes);
        let header = BlockHeader::read(&mut r)?;
        let count = r.u32()? as usize;
        // Each record is at least tag + fixed fields + signature.
        if count > r.remaining() / 100 + 1 {
            return Err(EncodingError::InvalidValue("record count"));
        }
        let mut records = Vec::with_capacity(count);
        for _ in 0..count {
            records.push(HealthPassport::read(&mut r)?);
        }
        r.finish()?;
        Ok(Block { header, records })
    }
}

/// Traveller-held locator: which block, which record, and the salt that
/// opens its commitment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DhpToken {
    pub header_hash: Digest,
    pub record_index: u32,
    pub salt: Salt,
}

impl DhpToken {
    pub const ENCODED_LEN: usize = 32 + 4 + 16;

    pub fn to_bytes(&self) -> [u8; Self::ENCODED_LEN] {
        let mut out = [0u8; Self::ENCODED_LEN];
        out[..32].copy_from_slice(self.header_hash.as_bytes());
        out[32..36].copy_from_slice(&self.record_index.to_be_bytes());
        out[36..].copy_from_slice(self.salt.as_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, EncodingError> {
        let mut r = Reader::new(bytes);
        let token = DhpToken {
            header_hash: Digest(r.array()?),
            record_index: r.u32()?,
            salt: Salt(r.array()?),
        };
        r.finish()?;
        Ok(token)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.to_bytes())
    }

    pub fn from_hex(s: &str) -> Result<Self, EncodingError> {
        let raw = hex::decode(s.trim()).map_err(|_| EncodingError::InvalidValue("token hex"))?;
        Self::from_bytes(&raw)
    }
}
