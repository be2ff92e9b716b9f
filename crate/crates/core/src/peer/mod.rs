//! Light P2P client: handshake, block-hash sync, block fetch with integrity
//! checks, address discovery and multi-peer quorum fetch.

mod quorum;
mod session;
mod transport;

use std::time::Duration;

use crate::wire::{DecodeError, EncodeError, FrameError, Hash256, IntegrityFault, NetworkId};

pub use quorum::{
    quorum_fetch, quorum_over_sessions, DissentReason, Quorum, QuorumError, QuorumResult,
};
pub use session::{handshake, PeerSession, SessionState};
pub use transport::{memory_pair, Connector, MemoryStream, TcpConnector, Transport};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeerConfig {
    /// `host:port` of the full node.
    pub address: String,
    pub network: NetworkId,
    pub user_agent: String,
    pub handshake_timeout: Duration,
    pub read_timeout: Duration,
}

impl PeerConfig {
    pub fn new(address: impl Into<String>, network: NetworkId) -> Self {
        PeerConfig {
            address: address.into(),
            network,
            user_agent: format!("/oprv:{}/", env!("CARGO_PKG_VERSION")),
            handshake_timeout: Duration::from_secs(10),
            read_timeout: Duration::from_secs(30),
        }
    }
}

/// Conditions tolerated during a session and kept for inspection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PeerEvent {
    UnknownCommand(String),
    UnknownInvType(u32),
    Ignored(String),
    GarbageSkipped(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PeerError {
    #[error("handshake did not complete in time")]
    HandshakeTimeout,
    #[error("no reply before the read timeout")]
    ReadTimeout,
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("peer speaks another network")]
    WrongNetwork,
    #[error("session is {0:?}, not established")]
    NotEstablished(SessionState),
    #[error("peer does not have {0}")]
    NotFound(Hash256),
    #[error("block failed integrity check: {0}")]
    Integrity(IntegrityFault),
    #[error("malformed {command} message: {source}")]
    Decode {
        command: String,
        source: DecodeError,
    },
    #[error("framing error: {0}")]
    Frame(FrameError),
    #[error("encoding error: {0}")]
    Encode(EncodeError),
    #[error("connection closed by peer")]
    Closed,
    #[error("i/o error: {0}")]
    Io(String),
}
