use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::fragment::{MsgId, PendingMessage, Reassembler};
use crate::wire::{Hash256, NetworkId};

/// How far a scan has progressed, plus fragments still waiting for peers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScanCheckpoint {
    pub network: NetworkId,
    pub last_block_hash: Hash256,
    pub last_height: u32,
    pub fragments: Reassembler,
}

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] io::Error),
    #[error("checkpoint is not valid: {0}")]
    Format(String),
}

impl ScanCheckpoint {
    /// Start of chain: nothing processed yet.
    pub fn new(network: NetworkId) -> Self {
        ScanCheckpoint {
            network,
            last_block_hash: Hash256::ZERO,
            last_height: 0,
            fragments: Reassembler::new(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&CheckpointFile::from(self)).expect("checkpoint serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, CheckpointError> {
        let file: CheckpointFile =
            serde_json::from_str(s).map_err(|e| CheckpointError::Format(e.to_string()))?;
        file.try_into()
    }

    /// Read `path`, or a fresh checkpoint if it does not exist.
    pub fn load_or_new(path: &Path, network: NetworkId) -> Result<Self, CheckpointError> {
        match fs::read_to_string(path) {
            Ok(s) => Self::from_json(&s),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Self::new(network)),
            Err(e) => Err(e.into()),
        }
    }

    /// Write via a sibling temp file and rename, so readers never see a
    /// partial document.
    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let mut tmp_name = path
            .file_name()
            .map(|n| n.to_os_string())
            .unwrap_or_default();
        tmp_name.push(format!(".tmp{}", std::process::id()));
        let tmp = path.with_file_name(tmp_name);
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(self.to_json().as_bytes())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    network: NetworkId,
    last_block_hash: Hash256,
    last_height: u32,
    #[serde(default)]
    pending_fragments: Vec<PendingFile>,
    #[serde(default)]
    completed_msg_ids: Vec<CompletedFile>,
}

#[derive(Serialize, Deserialize)]
struct PendingFile {
    msg_id_hex: String,
    total: u8,
    #[serde(default)]
    encrypted: bool,
    received: Vec<ChunkFile>,
    first_seen_height: u32,
}

#[derive(Serialize, Deserialize)]
struct ChunkFile {
    index: u8,
    chunk_hex: String,
}

#[derive(Serialize, Deserialize)]
struct CompletedFile {
    msg_id_hex: String,
    height: u32,
}

impl From<&ScanCheckpoint> for CheckpointFile {
    fn from(c: &ScanCheckpoint) -> Self {
        CheckpointFile {
            network: c.network,
            last_block_hash: c.last_block_hash,
            last_height: c.last_height,
            pending_fragments: c
                .fragments
                .pending
                .iter()
                .map(|(id, p)| PendingFile {
                    msg_id_hex: hex::encode(id),
                    total: p.total,
                    encrypted: p.encrypted,
                    received: p
                        .received
                        .iter()
                        .map(|(i, chunk)| ChunkFile {
                            index: *i,
                            chunk_hex: hex::encode(chunk),
                        })
                        .collect(),
                    first_seen_height: p.first_seen_height,
                })
                .collect(),
            completed_msg_ids: c
                .fragments
                .completed
                .iter()
                .map(|(id, h)| CompletedFile {
                    msg_id_hex: hex::encode(id),
                    height: *h,
                })
                .collect(),
        }
    }
}

fn parse_msg_id(s: &str) -> Result<MsgId, CheckpointError> {
    let bytes = hex::decode(s).map_err(|e| CheckpointError::Format(format!("msg_id_hex: {e}")))?;
    bytes
        .try_into()
        .map_err(|_| CheckpointError::Format(format!("msg_id_hex must be 4 bytes: {s}")))
}

impl TryFrom<CheckpointFile> for ScanCheckpoint {
    type Error = CheckpointError;

    fn try_from(f: CheckpointFile) -> Result<Self, Self::Error> {
        let mut fragments = Reassembler::new();
        for p in f.pending_fragments {
            if p.total == 0 {
                return Err(CheckpointError::Format(
                    "pending fragment total is zero".into(),
                ));
            }
            let mut received = BTreeMap::new();
            for c in p.received {
                if c.index >= p.total {
                    return Err(CheckpointError::Format(
                        "pending fragment index out of range".into(),
                    ));
                }
                let chunk = hex::decode(&c.chunk_hex)
                    .map_err(|e| CheckpointError::Format(format!("chunk_hex: {e}")))?;
                received.insert(c.index, chunk);
            }
            fragments.pending.insert(
                parse_msg_id(&p.msg_id_hex)?,
                PendingMessage {
                    total: p.total,
                    encrypted: p.encrypted,
                    received,
                    first_seen_height: p.first_seen_height,
                },
            );
        }
        for c in f.completed_msg_ids {
            fragments
                .completed
                .insert(parse_msg_id(&c.msg_id_hex)?, c.height);
        }
        Ok(ScanCheckpoint {
            network: f.network,
            last_block_hash: f.last_block_hash,
            last_height: f.last_height,
            fragments,
        })
    }
}
