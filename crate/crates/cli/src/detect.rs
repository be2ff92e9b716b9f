use std::io::Write;
use std::sync::atomic::AtomicBool;
use std::time::Duration;

use oprv_core::rendezvous::{detect, detect_block, BlockSource, DetectionPolicy};
use oprv_core::wire::{extract_op_returns, Hash256};

use crate::args::DetectArgs;
use crate::config::CliConfig;
use crate::output::{DetectSummary, Output};
use crate::source::{connect_peers, with_retries};
use crate::watch::{fetch_via_explorer, parse_txid};
use crate::CliError;

fn policy(cfg: &CliConfig, args: &DetectArgs) -> Result<DetectionPolicy, CliError> {
    let mut policy = DetectionPolicy::default();
    if let Some(t) = args.threshold {
        if !(0.0..=1.0).contains(&t) {
            return Err(CliError::Config(format!(
                "threshold must be in [0, 1], got {t}"
            )));
        }
        policy.threshold = t;
    }
    policy.keys.extend(cfg.key_bytes().map(<[u8]>::to_vec));
    Ok(policy)
}

pub fn run(
    cfg: &CliConfig,
    args: &DetectArgs,
    out: &mut Output<'_>,
    err: &mut dyn Write,
    retry_base: Duration,
    stop: &AtomicBool,
) -> Result<(), CliError> {
    let policy = policy(cfg, args)?;
    let mut summary = DetectSummary::default();
    if let Some(txid) = &args.txid {
        let txid = parse_txid(txid)?;
        for (vout, o) in fetch_via_explorer(cfg, &txid, err)?.iter().enumerate() {
            let Some(data) = &o.data else { continue };
            summary.scanned += 1;
            if let Some(mut r) = detect(data, &policy) {
                r.txid = Some(txid);
                r.vout = Some(vout as u32);
                summary.flagged += 1;
                out.detection(&r, None)?;
            }
        }
        return out.detect_summary(&summary);
    }

    let from = args.from_height.max(1);
    with_retries(retry_base, stop, || {
        summary = DetectSummary::default();
        let mut source = connect_peers(cfg)?;
        let source_err = |e: oprv_core::rendezvous::SourceError| CliError::Source(e.to_string());
        let hashes = source.blocks_after(&Hash256::ZERO).map_err(source_err)?;
        let mut pending = Vec::new();
        for (i, hash) in hashes.iter().enumerate() {
            let height = i as u32 + 1;
            if height < from {
                continue;
            }
            let block = source.fetch(hash).map_err(source_err)?;
            let (reports, malformed) = detect_block(&block, &policy);
            summary.blocks += 1;
            summary.malformed += malformed;
            summary.scanned += block
                .transactions
                .iter()
                .skip(1)
                .map(|t| extract_op_returns(t).outputs.len())
                .sum::<usize>();
            summary.flagged += reports.len();
            pending.extend(reports.into_iter().map(|r| (r, height)));
        }
        Ok(pending)
    })
    .and_then(|reports| {
        for (r, height) in &reports {
            out.detection(r, Some(*height))?;
        }
        out.detect_summary(&summary)
    })
}
