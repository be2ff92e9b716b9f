//! Cross-checking one block across several peers.

use std::collections::BTreeMap;
use std::thread;

use serde::Serialize;

use crate::wire::{Block, Hash256, IntegrityFault};

use super::session::{handshake, PeerSession};
use super::transport::{Connector, Transport};
use super::{PeerConfig, PeerError};

/// Fraction of responding peers a byte-identical group must strictly exceed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quorum(f64);

impl Quorum {
    pub fn new(fraction: f64) -> Option<Self> {
        (0.0..1.0).contains(&fraction).then_some(Quorum(fraction))
    }

    pub fn fraction(self) -> f64 {
        self.0
    }

    fn satisfied(self, agreeing: usize, responding: usize) -> bool {
        agreeing as f64 > self.0 * responding as f64
    }
}

impl Default for Quorum {
    fn default() -> Self {
        Quorum(0.5)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DissentReason {
    HashMismatch,
    BadMerkle,
    BadWitnessCommitment,
    /// The block bytes did not parse.
    Truncated,
    Timeout,
    NotFound,
    /// Sent a well-formed block that lost the vote.
    Outvoted,
    Protocol(String),
    Unreachable(String),
}

impl DissentReason {
    /// Whether the peer counts toward the quorum denominator. Peers that
    /// answered with bad data respond; silent or absent ones abstain.
    pub fn is_response(&self) -> bool {
        !matches!(
            self,
            DissentReason::Timeout | DissentReason::NotFound | DissentReason::Unreachable(_)
        )
    }

    fn from_error(e: &PeerError) -> Self {
        match e {
            PeerError::Integrity(IntegrityFault::HashMismatch) => DissentReason::HashMismatch,
            PeerError::Integrity(IntegrityFault::BadMerkle) => DissentReason::BadMerkle,
            PeerError::Integrity(IntegrityFault::BadWitnessCommitment) => {
                DissentReason::BadWitnessCommitment
            }
            PeerError::Decode { .. } => DissentReason::Truncated,
            PeerError::ReadTimeout | PeerError::HandshakeTimeout => DissentReason::Timeout,
            PeerError::NotFound(_) => DissentReason::NotFound,
            PeerError::Io(m) => DissentReason::Unreachable(m.clone()),
            PeerError::Closed => DissentReason::Unreachable("connection closed".into()),
            other => DissentReason::Protocol(other.to_string()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct QuorumResult {
    pub block: Block,
    /// The serialized block the majority agreed on.
    pub raw: Vec<u8>,
    pub agreeing_peers: Vec<String>,
    pub dissenting_peers: Vec<(String, DissentReason)>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum QuorumError {
    #[error(
        "no block version reached quorum ({largest_group} of {responding} responding peers agreed)"
    )]
    NoQuorum {
        responding: usize,
        largest_group: usize,
        dissenting: Vec<(String, DissentReason)>,
    },
    #[error("no peer answered")]
    AllPeersFailed(Vec<(String, DissentReason)>),
    #[error("no peers configured")]
    NoPeers,
}

type Outcome = (String, Result<(Block, Vec<u8>), PeerError>);

fn assemble(outcomes: Vec<Outcome>, quorum: Quorum) -> Result<QuorumResult, QuorumError> {
    let mut groups: BTreeMap<Vec<u8>, (Block, Vec<String>)> = BTreeMap::new();
    let mut dissenting = Vec::new();
    for (peer, outcome) in outcomes {
        match outcome {
            Ok((block, raw)) => groups
                .entry(raw)
                .or_insert_with(|| (block, Vec::new()))
                .1
                .push(peer),
            Err(e) => dissenting.push((peer, DissentReason::from_error(&e))),
        }
    }
    let responding = groups.values().map(|(_, peers)| peers.len()).sum::<usize>()
        + dissenting.iter().filter(|(_, r)| r.is_response()).count();
    if responding == 0 {
        return Err(QuorumError::AllPeersFailed(dissenting));
    }
    let best = groups
        .iter()
        .max_by_key(|(_, (_, peers))| peers.len())
        .map(|(raw, _)| raw.clone());
    let largest_group = best.as_ref().map_or(0, |raw| groups[raw].1.len());
    let Some(best) = best.filter(|_| quorum.satisfied(largest_group, responding)) else {
        for (_, (_, peers)) in groups {
            dissenting.extend(peers.into_iter().map(|p| (p, DissentReason::Outvoted)));
        }
        return Err(QuorumError::NoQuorum {
            responding,
            largest_group,
            dissenting,
        });
    };
    let (block, agreeing_peers) = groups.remove(&best).unwrap();
    for (_, (_, peers)) in groups {
        dissenting.extend(peers.into_iter().map(|p| (p, DissentReason::Outvoted)));
    }
    Ok(QuorumResult {
        block,
        raw: best,
        agreeing_peers,
        dissenting_peers: dissenting,
    })
}

/// Fetch `hash` over already-established sessions, concurrently, and accept
/// the byte-identical copy held by more than `quorum` of responding peers.
pub fn quorum_over_sessions<T: Transport>(
    sessions: &mut [PeerSession<T>],
    hash: &Hash256,
    quorum: Quorum,
) -> Result<QuorumResult, QuorumError> {
    if sessions.is_empty() {
        return Err(QuorumError::NoPeers);
    }
    let outcomes: Vec<Outcome> = thread::scope(|s| {
        let handles: Vec<_> = sessions
            .iter_mut()
            .map(|session| {
                s.spawn(move || {
                    let peer = session.config().address.clone();
                    (peer, session.fetch_block_raw(hash))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("fetch thread panicked"))
            .collect()
    });
    assemble(outcomes, quorum)
}

/// Connect to every peer independently, fetch `hash` from each, and apply
/// the strict-majority rule over the exact bytes received.
pub fn quorum_fetch<C: Connector>(
    connector: &C,
    configs: &[PeerConfig],
    hash: &Hash256,
    quorum: Quorum,
) -> Result<QuorumResult, QuorumError> {
    if configs.is_empty() {
        return Err(QuorumError::NoPeers);
    }
    let outcomes: Vec<Outcome> = thread::scope(|s| {
        let handles: Vec<_> = configs
            .iter()
            .map(|cfg| {
                s.spawn(move || {
                    let result = connector
                        .connect(cfg)
                        .map_err(|e| PeerError::Io(e.to_string()))
                        .and_then(|t| handshake(cfg.clone(), t))
                        .and_then(|mut session| session.fetch_block_raw(hash));
                    (cfg.address.clone(), result)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("fetch thread panicked"))
            .collect()
    });
    assemble(outcomes, quorum)
}
