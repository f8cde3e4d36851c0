//! Append-only logs of length-prefixed frames.
//!
//! Both logs start with a four-byte magic and a version byte, followed by
//! frames of `u32 BE length ‖ payload`. The block log's first frame is the
//! genesis block; the receipt log holds canonical verification receipts.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::ledger::{Block, ChainState, LedgerConfig};
use crate::protocol::VerificationReceipt;
use crate::registry::Registry;
use crate::types::Timestamp;

pub const BLOCK_LOG_MAGIC: [u8; 4] = *b"DHPB";
pub const RECEIPT_LOG_MAGIC: [u8; 4] = *b"DHPR";
pub const LOG_VERSION: u8 = 1;
pub const LOG_HEADER_LEN: u64 = 5;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("bad log header: expected {magic} version {LOG_VERSION}")]
    BadHeader { magic: &'static str },
    #[error("frame {frame} at byte offset {offset}: {reason}")]
    Frame {
        frame: u64,
        offset: u64,
        reason: String,
    },
    #[error("{} already exists", .0.display())]
    Exists(PathBuf),
}

impl LogError {
    /// Byte offset of the offending frame's length prefix, if any.
    pub fn frame_offset(&self) -> Option<(u64, u64)> {
        match self {
            LogError::Frame { frame, offset, .. } => Some((*frame, *offset)),
            _ => None,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> LogError + '_ {
    move |source| LogError::Io {
        path: path.to_owned(),
        source,
    }
}

/// A frame's position and payload within a log image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameRef<'a> {
    pub index: u64,
    pub offset: u64,
    pub payload: &'a [u8],
}

/// Splits a log image into complete frames, plus the offset of an incomplete
/// trailing frame if there is one.
pub fn split_frames<'a>(
    bytes: &'a [u8],
    magic: &'static [u8; 4],
) -> Result<(Vec<FrameRef<'a>>, Option<u64>), LogError> {
    let name = std::str::from_utf8(magic).unwrap_or("log");
    if bytes.len() < LOG_HEADER_LEN as usize || bytes[..4] != magic[..] || bytes[4] != LOG_VERSION {
        return Err(LogError::BadHeader { magic: name });
    }
    let mut frames = Vec::new();
    let mut pos = LOG_HEADER_LEN as usize;
    while pos < bytes.len() {
        let rest = &bytes[pos..];
        let len = match rest.get(..4) {
            Some(prefix) => u32::from_be_bytes(prefix.try_into().expect("4 bytes")) as usize,
            None => return Ok((frames, Some(pos as u64))),
        };
        let Some(payload) = rest.get(4..4 + len) else {
            return Ok((frames, Some(pos as u64)));
        };
        frames.push(FrameRef {
            index: frames.len() as u64,
            offset: pos as u64,
            payload,
        });
        pos += 4 + len;
    }
    Ok((frames, None))
}

fn frame_bytes(payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + payload.len());
    out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    out.extend_from_slice(payload);
    out
}

fn create_log(path: &Path, magic: &[u8; 4]) -> Result<File, LogError> {
    let mut file = OpenOptions::new()
        .append(true)
        .create_new(true)
        .open(path)
        .map_err(|e| match e.kind() {
            io::ErrorKind::AlreadyExists => LogError::Exists(path.to_owned()),
            _ => LogError::Io {
                path: path.to_owned(),
                source: e,
            },
        })?;
    file.write_all(magic).map_err(io_err(path))?;
    file.write_all(&[LOG_VERSION]).map_err(io_err(path))?;
    Ok(file)
}

fn append_frame(file: &mut File, path: &Path, payload: &[u8]) -> Result<(), LogError> {
    file.write_all(&frame_bytes(payload)).map_err(io_err(path))?;
    file.sync_data().map_err(io_err(path))
}

/// The expected first block of a consortium's chain.
pub fn expected_genesis(registry: &Registry, genesis_time: Timestamp) -> Option<Block> {
    let first = registry.authority_set().first()?.id;
    Some(Block::genesis(first, genesis_time))
}

#[derive(Debug)]
pub struct BlockLog {
    path: PathBuf,
    file: File,
    frames: u64,
}

/// Result of opening a block log after a restart.
#[derive(Debug)]
pub struct Recovered {
    pub log: BlockLog,
    pub chain: ChainState,
    /// Bytes of an incomplete final frame that were cut off.
    pub discarded_bytes: u64,
}

impl BlockLog {
    pub fn create(path: &Path, genesis: &Block) -> Result<Self, LogError> {
        let mut file = create_log(path, &BLOCK_LOG_MAGIC)?;
        append_frame(&mut file, path, &genesis.canonical_bytes())?;
        Ok(Self {
            path: path.to_owned(),
            file,
            frames: 1,
        })
    }

    /// Opens an existing log, replaying every frame through block validation.
    /// A torn final frame is truncated away; any other defect is an error.
    pub fn recover(
        path: &Path,
        registry: &Registry,
        genesis_time: Timestamp,
        config: LedgerConfig,
        now: Timestamp,
    ) -> Result<Recovered, LogError> {
        let bytes = fs::read(path).map_err(io_err(path))?;
        let (chain, good_len) = replay(&bytes, registry, genesis_time, config, now, false)?;
        let discarded_bytes = bytes.len() as u64 - good_len;
        let file = OpenOptions::new()
            .append(true)
            .open(path)
            .map_err(io_err(path))?;
        if discarded_bytes > 0 {
            file.set_len(good_len).map_err(io_err(path))?;
            file.sync_data().map_err(io_err(path))?;
        }
        Ok(Recovered {
            log: BlockLog {
                path: path.to_owned(),
                file,
                frames: chain.blocks().len() as u64,
            },
            chain,
            discarded_bytes,
        })
    }

    /// Opens the log at `path`, creating it with the consortium's genesis if
    /// it does not exist yet.
    pub fn open_or_create(
        path: &Path,
        registry: &Registry,
        genesis_time: Timestamp,
        config: LedgerConfig,
        now: Timestamp,
    ) -> Result<Recovered, LogError> {
        if path.exists() {
            return Self::recover(path, registry, genesis_time, config, now);
        }
        let chain = ChainState::from_registry(registry, genesis_time, config).map_err(|e| {
            LogError::Frame {
                frame: 0,
                offset: LOG_HEADER_LEN,
                reason: e.to_string(),
            }
        })?;
        let log = Self::create(path, chain.genesis())?;
        Ok(Recovered {
            log,
            chain,
            discarded_bytes: 0,
        })
    }

    pub fn append(&mut self, block: &Block) -> Result<(), LogError> {
        append_frame(&mut self.file, &self.path, &block.canonical_bytes())?;
        self.frames += 1;
        Ok(())
    }

    pub fn frames(&self) -> u64 {
        self.frames
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

/// Replays a block log without modifying it, ignoring a torn final frame.
/// Suitable for reading a log another process is appending to.
pub fn read_block_log(
    path: &Path,
    registry: &Registry,
    genesis_time: Timestamp,
    config: LedgerConfig,
    now: Timestamp,
) -> Result<ChainState, LogError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    replay(&bytes, registry, genesis_time, config, now, false).map(|(chain, _)| chain)
}

/// Full revalidation of a block log from genesis. Unlike recovery, a torn
/// final frame is reported rather than ignored.
pub fn audit_block_log(
    path: &Path,
    registry: &Registry,
    genesis_time: Timestamp,
    config: LedgerConfig,
    now: Timestamp,
) -> Result<ChainState, LogError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    replay(&bytes, registry, genesis_time, config, now, true).map(|(chain, _)| chain)
}

fn replay(
    bytes: &[u8],
    registry: &Registry,
    genesis_time: Timestamp,
    config: LedgerConfig,
    now: Timestamp,
    strict: bool,
) -> Result<(ChainState, u64), LogError> {
    let (frames, torn) = split_frames(bytes, &BLOCK_LOG_MAGIC)?;
    let frame_err = |f: &FrameRef<'_>, reason: String| LogError::Frame {
        frame: f.index,
        offset: f.offset,
        reason,
    };
    let torn_err = || match (strict, torn) {
        (true, Some(offset)) => Err(LogError::Frame {
            frame: frames.len() as u64,
            offset,
            reason: "incomplete frame at end of log".into(),
        }),
        _ => Ok(()),
    };
    if frames.is_empty() {
        torn_err()?;
    }
    let first = frames.first().ok_or(LogError::Frame {
        frame: 0,
        offset: LOG_HEADER_LEN,
        reason: "missing genesis frame".into(),
    })?;
    let genesis = Block::from_canonical_bytes(first.payload)
        .map_err(|e| frame_err(first, e.to_string()))?;
    if Some(&genesis) != expected_genesis(registry, genesis_time).as_ref() {
        return Err(frame_err(first, "genesis does not match the consortium".into()));
    }
    let mut chain = ChainState::with_genesis(
        genesis,
        registry.authority_set(),
        registry.issuers(),
        config,
    )
    .map_err(|e| frame_err(first, e.to_string()))?;
    for f in &frames[1..] {
        let block =
            Block::from_canonical_bytes(f.payload).map_err(|e| frame_err(f, e.to_string()))?;
        chain
            .append_block(block, now)
            .map_err(|e| frame_err(f, e.to_string()))?;
    }
    torn_err()?;
    let good_len = frames
        .last()
        .map_or(LOG_HEADER_LEN, |f| f.offset + 4 + f.payload.len() as u64);
    Ok((chain, good_len))
}

#[derive(Debug)]
pub struct ReceiptLog {
    path: PathBuf,
    file: File,
}

impl ReceiptLog {
    /// Opens or creates the log; a torn final frame is truncated away.
    pub fn open(path: &Path) -> Result<Self, LogError> {
        if !path.exists() {
            let file = create_log(path, &RECEIPT_LOG_MAGIC)?;
            return Ok(Self {
                path: path.to_owned(),
                file,
            });
        }
        let bytes = fs::read(path).map_err(io_err(path))?;
        let (_, torn) = split_frames(&bytes, &RECEIPT_LOG_MAGIC)?;
        let file = OpenOptions::new()
            .append(true)
            .open(path)
            .map_err(io_err(path))?;
        if let Some(offset) = torn {
            file.set_len(offset).map_err(io_err(path))?;
        }
        Ok(Self {
            path: path.to_owned(),
            file,
        })
    }

    pub fn append(&mut self, receipt: &VerificationReceipt) -> Result<(), LogError> {
        append_frame(&mut self.file, &self.path, &receipt.canonical_bytes())
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

pub fn read_receipts(path: &Path) -> Result<Vec<VerificationReceipt>, LogError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    parse_receipt_log(&bytes)
}

pub fn parse_receipt_log(bytes: &[u8]) -> Result<Vec<VerificationReceipt>, LogError> {
    let (frames, torn) = split_frames(bytes, &RECEIPT_LOG_MAGIC)?;
    if let Some(offset) = torn {
        return Err(LogError::Frame {
            frame: frames.len() as u64,
            offset,
            reason: "incomplete frame at end of log".into(),
        });
    }
    frames
        .iter()
        .map(|f| {
            VerificationReceipt::from_canonical_bytes(f.payload).map_err(|e| LogError::Frame {
                frame: f.index,
                offset: f.offset,
                reason: e.to_string(),
            })
        })
        .collect()
}
