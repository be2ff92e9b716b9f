//! Connecting to the configured peers, with retries.

use std::sync::atomic::{AtomicBool, Ordering};
use std::thread;
use std::time::{Duration, Instant};

use oprv_core::peer::{handshake, Connector, PeerConfig, PeerSession, TcpConnector, Transport};
use oprv_core::rendezvous::PeerSource;

use crate::config::CliConfig;
use crate::CliError;

pub const ATTEMPTS: u32 = 3;

pub type Session = PeerSession<Box<dyn Transport>>;

/// Handshake with every configured peer, keeping the ones that answer.
pub fn connect_peers(cfg: &CliConfig) -> Result<PeerSource<Box<dyn Transport>>, CliError> {
    if cfg.peers.is_empty() {
        return Err(CliError::Config(
            "no peers configured (use --peer or `peers` in the config file)".into(),
        ));
    }
    let mut sessions: Vec<Session> = Vec::new();
    let mut failures = Vec::new();
    for addr in &cfg.peers {
        let pc = PeerConfig::new(addr.clone(), cfg.network);
        let attempt = TcpConnector
            .connect(&pc)
            .map_err(|e| e.to_string())
            .and_then(|t| handshake(pc, t).map_err(|e| e.to_string()));
        match attempt {
            Ok(s) => {
                log::info!("connected to {addr}, peer height {}", s.remote_height());
                sessions.push(s);
            }
            Err(e) => {
                log::warn!("peer {addr}: {e}");
                failures.push(format!("{addr}: {e}"));
            }
        }
    }
    if sessions.is_empty() {
        return Err(CliError::Source(format!(
            "no peer reachable ({})",
            failures.join("; ")
        )));
    }
    PeerSource::new(sessions, cfg.quorum).map_err(|e| CliError::Source(e.to_string()))
}

/// Run `op` up to [`ATTEMPTS`] times while it fails with a source error,
/// sleeping `base`, `2 * base`, ... in between.
pub fn with_retries<T>(
    base: Duration,
    stop: &AtomicBool,
    mut op: impl FnMut() -> Result<T, CliError>,
) -> Result<T, CliError> {
    let mut delay = base;
    let mut attempt = 1;
    loop {
        match op() {
            Err(CliError::Source(msg)) if attempt < ATTEMPTS && !stop.load(Ordering::SeqCst) => {
                log::warn!("attempt {attempt} of {ATTEMPTS} failed: {msg}; retrying in {delay:?}");
                sleep_unless_stopped(delay, stop);
                delay *= 2;
                attempt += 1;
            }
            Err(CliError::Source(msg)) => {
                return Err(CliError::Source(format!(
                    "{msg} (gave up after {attempt} attempts)"
                )))
            }
            other => return other,
        }
    }
}

/// Sleep for `d`, waking early once `stop` is set. Returns whether it was.
pub fn sleep_unless_stopped(d: Duration, stop: &AtomicBool) -> bool {
    let end = Instant::now() + d;
    while !stop.load(Ordering::SeqCst) {
        let now = Instant::now();
        if now >= end {
            return false;
        }
        thread::sleep((end - now).min(Duration::from_millis(50)));
    }
    true
}
