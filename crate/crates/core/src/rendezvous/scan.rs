//! Walking the chain for rendezvous payloads.

use serde::Serialize;

use super::checkpoint::ScanCheckpoint;
use super::endpoint::Endpoint;
use super::payload::{Decoded, PayloadCodec, KEY_LEN};
use super::source::{BlockSource, SourceError};
use super::RendezvousError;
use crate::wire::{extract_op_returns, Hash256, NetworkId};

pub const DEFAULT_FRAGMENT_HORIZON: u32 = 100;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Discovery {
    pub endpoint: Endpoint,
    pub height: u32,
    pub block_hash: Hash256,
    /// The transaction that completed the message.
    pub txid: Hash256,
    pub fragmented: bool,
}

#[derive(Debug, Clone)]
pub struct ScanOptions {
    pub key: Option<Vec<u8>>,
    /// Blocks with fewer confirmations are left for a later scan. The tip
    /// itself has one.
    pub min_confirmations: u32,
    pub fragment_horizon: u32,
    pub codec: PayloadCodec,
}

impl ScanOptions {
    pub fn for_network(network: NetworkId) -> Self {
        ScanOptions {
            key: None,
            min_confirmations: network.default_min_confirmations(),
            fragment_horizon: DEFAULT_FRAGMENT_HORIZON,
            codec: PayloadCodec::default(),
        }
    }
}

/// Payloads that carried our tag but could not be used.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ScanDiagnostics {
    pub auth_failed: usize,
    pub malformed: usize,
    /// OP_RETURN scripts whose push did not parse.
    pub malformed_pushes: usize,
    pub expired_fragment_sets: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ScanReport {
    pub discoveries: Vec<Discovery>,
    pub diagnostics: ScanDiagnostics,
    pub blocks_scanned: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScanError {
    #[error("checkpoint is for {checkpoint:?} but the source serves {source_network:?}")]
    NetworkMismatch {
        checkpoint: NetworkId,
        source_network: NetworkId,
    },
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error("block at height {height} does not extend {expected_prev}")]
    BrokenLinkage { height: u32, expected_prev: Hash256 },
    #[error("source returned block {got} when asked for {requested}")]
    WrongBlock { requested: Hash256, got: Hash256 },
    #[error("key must be {KEY_LEN} bytes, got {0}")]
    KeyWrongSize(usize),
    #[error("scan stopped: {0}")]
    Aborted(String),
}

/// Scan every sufficiently confirmed block after the checkpoint. `on_block`
/// runs after each block with the advanced checkpoint and that block's
/// discoveries, which is the place to persist progress. An error from
/// `on_block` stops the scan with [`ScanError::Aborted`].
pub fn scan_blocks_with<S, F>(
    source: &mut S,
    checkpoint: &mut ScanCheckpoint,
    opts: &ScanOptions,
    mut on_block: F,
) -> Result<ScanReport, ScanError>
where
    S: BlockSource + ?Sized,
    F: FnMut(&ScanCheckpoint, &[Discovery]) -> Result<(), String>,
{
    if checkpoint.network != source.network() {
        return Err(ScanError::NetworkMismatch {
            checkpoint: checkpoint.network,
            source_network: source.network(),
        });
    }
    if let Some(k) = &opts.key {
        if k.len() != KEY_LEN {
            return Err(ScanError::KeyWrongSize(k.len()));
        }
    }
    let key = opts.key.as_deref();
    let hashes = source.blocks_after(&checkpoint.last_block_hash)?;
    let held_back = opts.min_confirmations.max(1) as usize - 1;
    let eligible = hashes.len().saturating_sub(held_back);
    let mut report = ScanReport::default();

    for hash in hashes.into_iter().take(eligible) {
        let height = checkpoint.last_height + 1;
        let block = source.fetch(&hash)?;
        let got = block.block_hash();
        if got != hash {
            return Err(ScanError::WrongBlock {
                requested: hash,
                got,
            });
        }
        let prev = checkpoint.last_block_hash;
        if !prev.is_zero() && block.header.prev_block_hash != prev {
            return Err(ScanError::BrokenLinkage {
                height,
                expected_prev: prev,
            });
        }
        let mut found = Vec::new();
        // The coinbase is skipped: its outputs are chosen by the miner.
        for tx in block.transactions.iter().skip(1) {
            let scan = extract_op_returns(tx);
            report.diagnostics.malformed_pushes += scan.malformed.len();
            for out in scan.outputs {
                let endpoint = match opts.codec.decode_payload(&out.data, key) {
                    Ok(Decoded::Endpoint(ep)) => Some((ep, false)),
                    Ok(Decoded::NotOurs) => None,
                    Ok(Decoded::Fragment(part)) => match checkpoint.fragments.push(part, height) {
                        Ok(Some(done)) => {
                            match opts.codec.open_body(&done.body, done.encrypted, key) {
                                Ok(ep) => Some((ep, true)),
                                Err(e) => {
                                    report.diagnostics.record(&e);
                                    None
                                }
                            }
                        }
                        Ok(None) => None,
                        Err(e) => {
                            report.diagnostics.record(&e);
                            None
                        }
                    },
                    Err(e) => {
                        report.diagnostics.record(&e);
                        None
                    }
                };
                if let Some((endpoint, fragmented)) = endpoint {
                    found.push(Discovery {
                        endpoint,
                        height,
                        block_hash: hash,
                        txid: tx.txid(),
                        fragmented,
                    });
                }
            }
        }
        report.diagnostics.expired_fragment_sets +=
            checkpoint.fragments.expire(height, opts.fragment_horizon);
        checkpoint.last_block_hash = hash;
        checkpoint.last_height = height;
        report.blocks_scanned += 1;
        on_block(checkpoint, &found).map_err(ScanError::Aborted)?;
        report.discoveries.extend(found);
    }
    Ok(report)
}

/// Scan from `checkpoint` and return the discoveries with the advanced
/// checkpoint.
pub fn scan_blocks<S: BlockSource + ?Sized>(
    source: &mut S,
    mut checkpoint: ScanCheckpoint,
    key: Option<&[u8]>,
    min_confirmations: u32,
) -> Result<(Vec<Discovery>, ScanCheckpoint), ScanError> {
    let opts = ScanOptions {
        key: key.map(<[u8]>::to_vec),
        min_confirmations,
        ..ScanOptions::for_network(checkpoint.network)
    };
    let report = scan_blocks_with(source, &mut checkpoint, &opts, |_, _| Ok(()))?;
    Ok((report.discoveries, checkpoint))
}

impl ScanDiagnostics {
    fn record(&mut self, e: &RendezvousError) {
        match e {
            RendezvousError::AuthFailed => self.auth_failed += 1,
            other => {
                log::debug!("unusable rendezvous payload: {other}");
                self.malformed += 1;
            }
        }
    }
}
