//! Where scanned blocks come from.

use crate::peer::{quorum_over_sessions, PeerError, PeerSession, Quorum, QuorumError, Transport};
use crate::wire::{Block, Hash256, NetworkId};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SourceError {
    #[error(transparent)]
    Peer(#[from] PeerError),
    #[error(transparent)]
    Quorum(#[from] QuorumError),
    #[error("block {0} is not available")]
    Missing(Hash256),
    #[error("{0}")]
    Other(String),
}

/// A provider of main-chain blocks.
pub trait BlockSource {
    fn network(&self) -> NetworkId;

    /// Hashes of the blocks following `after`, in chain order, up to the
    /// source's tip. A zero or unknown hash means "after genesis".
    fn blocks_after(&mut self, after: &Hash256) -> Result<Vec<Hash256>, SourceError>;

    fn fetch(&mut self, hash: &Hash256) -> Result<Block, SourceError>;
}

/// An in-memory chain indexed by height; `chain[0]` is genesis.
#[derive(Debug, Clone)]
pub struct MemorySource {
    pub network: NetworkId,
    pub chain: Vec<Block>,
}

impl BlockSource for MemorySource {
    fn network(&self) -> NetworkId {
        self.network
    }

    fn blocks_after(&mut self, after: &Hash256) -> Result<Vec<Hash256>, SourceError> {
        let start = self
            .chain
            .iter()
            .position(|b| b.block_hash() == *after)
            .map_or(1, |i| i + 1);
        Ok(self
            .chain
            .iter()
            .skip(start)
            .map(Block::block_hash)
            .collect())
    }

    fn fetch(&mut self, hash: &Hash256) -> Result<Block, SourceError> {
        self.chain
            .iter()
            .find(|b| b.block_hash() == *hash)
            .cloned()
            .ok_or(SourceError::Missing(*hash))
    }
}

/// Blocks served by one or more established peer sessions. With several
/// sessions, every block is fetched from all of them and accepted by quorum.
pub struct PeerSource<T: Transport> {
    sessions: Vec<PeerSession<T>>,
    quorum: Quorum,
}

impl<T: Transport> PeerSource<T> {
    pub fn new(sessions: Vec<PeerSession<T>>, quorum: Quorum) -> Result<Self, SourceError> {
        if sessions.is_empty() {
            return Err(SourceError::Quorum(QuorumError::NoPeers));
        }
        Ok(PeerSource { sessions, quorum })
    }

    pub fn sessions(&self) -> &[PeerSession<T>] {
        &self.sessions
    }

    pub fn into_sessions(self) -> Vec<PeerSession<T>> {
        self.sessions
    }
}

impl<T: Transport> BlockSource for PeerSource<T> {
    fn network(&self) -> NetworkId {
        self.sessions[0].config().network
    }

    fn blocks_after(&mut self, after: &Hash256) -> Result<Vec<Hash256>, SourceError> {
        Ok(self.sessions[0].sync_range(&[*after], Hash256::ZERO)?)
    }

    fn fetch(&mut self, hash: &Hash256) -> Result<Block, SourceError> {
        if self.sessions.len() == 1 {
            return Ok(self.sessions[0].fetch_block(hash)?);
        }
        let result = quorum_over_sessions(&mut self.sessions, hash, self.quorum)?;
        for (peer, reason) in &result.dissenting_peers {
            log::warn!("peer {peer} dissented on block {hash}: {reason:?}");
        }
        Ok(result.block)
    }
}
