use std::io::Write;
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Duration;

use oprv_core::publisher::{explorer_fetch_tx, ExplorerOutput, DEFAULT_EXPLORER_BASE};
use oprv_core::rendezvous::{
    scan_blocks_with, Decoded, PayloadCodec, Reassembler, ScanCheckpoint, ScanError, ScanOptions,
    SourceError,
};
use oprv_core::wire::{Hash256, NetworkId};

use crate::config::CliConfig;
use crate::lock::CheckpointLock;
use crate::output::Output;
use crate::source::{connect_peers, sleep_unless_stopped, with_retries};
use crate::CliError;

pub struct WatchPlan {
    pub follow: bool,
    pub interval: Duration,
    pub retry_base: Duration,
}

fn scan_error(e: ScanError) -> CliError {
    match e {
        ScanError::NetworkMismatch { .. } | ScanError::KeyWrongSize(_) | ScanError::Aborted(_) => {
            CliError::Config(e.to_string())
        }
        ScanError::Source(SourceError::Other(m)) => CliError::Source(m),
        other => CliError::Source(other.to_string()),
    }
}

pub fn run(
    cfg: &CliConfig,
    plan: &WatchPlan,
    out: &mut Output<'_>,
    stop: &AtomicBool,
) -> Result<(), CliError> {
    let _lock = CheckpointLock::acquire(&cfg.checkpoint_path)?;
    let mut checkpoint =
        ScanCheckpoint::load_or_new(&cfg.checkpoint_path, cfg.network).map_err(|e| {
            CliError::Config(format!("checkpoint {}: {e}", cfg.checkpoint_path.display()))
        })?;
    if checkpoint.network != cfg.network {
        return Err(CliError::Config(format!(
            "checkpoint {} belongs to {}, not {}",
            cfg.checkpoint_path.display(),
            checkpoint.network,
            cfg.network
        )));
    }
    let opts = ScanOptions {
        key: cfg.key_bytes().map(<[u8]>::to_vec),
        min_confirmations: cfg.min_confirmations,
        ..ScanOptions::for_network(cfg.network)
    };
    loop {
        let report = with_retries(plan.retry_base, stop, || {
            let mut source = connect_peers(cfg)?;
            let mut write_failure = None;
            let result = scan_blocks_with(&mut source, &mut checkpoint, &opts, |cp, found| {
                cp.save(&cfg.checkpoint_path)
                    .map_err(|e| format!("cannot save checkpoint: {e}"))?;
                for d in found {
                    if let Err(e) = out.discovery(d) {
                        let msg = e.to_string();
                        write_failure = Some(e);
                        return Err(msg);
                    }
                }
                Ok(())
            });
            match (result, write_failure) {
                (_, Some(e)) => Err(e),
                (r, None) => r.map_err(scan_error),
            }
        })?;
        let d = &report.diagnostics;
        log::info!(
            "scanned {} blocks to height {}: {} found, {} failed authentication, {} malformed",
            report.blocks_scanned,
            checkpoint.last_height,
            report.discoveries.len(),
            d.auth_failed,
            d.malformed + d.malformed_pushes
        );
        if !plan.follow || sleep_unless_stopped(plan.interval, stop) || stop.load(Ordering::SeqCst)
        {
            return Ok(());
        }
    }
}

pub fn explorer_base(cfg: &CliConfig) -> Result<String, CliError> {
    match (&cfg.explorer_base, cfg.network) {
        (Some(b), _) => Ok(b.clone()),
        (None, NetworkId::Testnet3) => Ok(DEFAULT_EXPLORER_BASE.to_string()),
        (None, n) => Err(CliError::Config(format!("--txid on {n} needs --explorer"))),
    }
}

pub fn parse_txid(s: &str) -> Result<Hash256, CliError> {
    s.parse()
        .map_err(|_| CliError::Config(format!("invalid txid {s:?}")))
}

pub fn fetch_via_explorer(
    cfg: &CliConfig,
    txid: &Hash256,
    err: &mut dyn Write,
) -> Result<Vec<ExplorerOutput>, CliError> {
    let base = explorer_base(cfg)?;
    let _ = writeln!(
        err,
        "warning: centralised fallback: reading {txid} from {base}, which is trusted blindly"
    );
    explorer_fetch_tx(&base, txid).map_err(|e| CliError::Source(e.to_string()))
}

/// Decode the rendezvous outputs of one transaction fetched from the explorer.
pub fn run_explorer(
    cfg: &CliConfig,
    txid: &str,
    out: &mut Output<'_>,
    err: &mut dyn Write,
) -> Result<(), CliError> {
    let txid = parse_txid(txid)?;
    let outputs = fetch_via_explorer(cfg, &txid, err)?;
    let codec = PayloadCodec::default();
    let key = cfg.key_bytes();
    let mut fragments = Reassembler::new();
    for (vout, o) in outputs.iter().enumerate() {
        let Some(data) = &o.data else { continue };
        let found = match codec.decode_payload(data, key) {
            Ok(Decoded::Endpoint(ep)) => Some(ep),
            Ok(Decoded::Fragment(part)) => match fragments.push(part, 0) {
                Ok(Some(done)) => codec.open_body(&done.body, done.encrypted, key).ok(),
                _ => None,
            },
            Ok(Decoded::NotOurs) => None,
            Err(e) => {
                log::warn!("output {vout}: {e}");
                None
            }
        };
        if let Some(ep) = found {
            out.explorer_discovery(&ep, &txid, vout as u32)?;
        }
    }
    Ok(())
}
