use std::io;
use std::num::NonZeroU64;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use log::{debug, trace};
use rand::Rng;

use crate::wire::{
    build_getaddr, build_getblocks, build_getdata, build_verack, build_version, decode_addr,
    decode_block, decode_inv, decode_version, unframe_message, AddrEntry, Block, DecodeError,
    FrameError, Hash256, InventoryVector, NetAddress, NetworkId, VersionConfig, VersionPayload,
    WireMessage, GETBLOCKS_BATCH,
};

use super::transport::Transport;
use super::{PeerConfig, PeerError, PeerEvent};

/// Commands of the live protocol that are tolerated silently.
const KNOWN_COMMANDS: &[&str] = &[
    "version",
    "verack",
    "ping",
    "pong",
    "getaddr",
    "addr",
    "addrv2",
    "sendaddrv2",
    "inv",
    "getdata",
    "notfound",
    "getblocks",
    "getheaders",
    "headers",
    "block",
    "tx",
    "sendheaders",
    "sendcmpct",
    "feefilter",
    "wtxidrelay",
    "mempool",
    "reject",
    "alert",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionState {
    Connected,
    VersionSent,
    VersionReceived,
    Established,
    Closed,
}

/// A connection to one full node. Only one request is in flight at a time.
pub struct PeerSession<T: Transport> {
    config: PeerConfig,
    transport: T,
    state: SessionState,
    remote_version: Option<VersionPayload>,
    remote_verack: bool,
    buf: Vec<u8>,
    events: Vec<PeerEvent>,
}

enum RecvError {
    Timeout,
    Peer(PeerError),
}

impl From<PeerError> for RecvError {
    fn from(e: PeerError) -> Self {
        RecvError::Peer(e)
    }
}

impl<T: Transport> PeerSession<T> {
    /// Wrap an open transport. No bytes are exchanged until [`handshake`](Self::handshake).
    pub fn new(config: PeerConfig, transport: T) -> Self {
        PeerSession {
            config,
            transport,
            state: SessionState::Connected,
            remote_version: None,
            remote_verack: false,
            buf: Vec::with_capacity(64 * 1024),
            events: Vec::new(),
        }
    }

    pub fn config(&self) -> &PeerConfig {
        &self.config
    }

    pub fn state(&self) -> SessionState {
        self.state
    }

    pub fn remote_version(&self) -> Option<&VersionPayload> {
        self.remote_version.as_ref()
    }

    /// Best height the peer advertised in its `version`, or -1 before the handshake.
    pub fn remote_height(&self) -> i32 {
        self.remote_version.as_ref().map_or(-1, |v| v.start_height)
    }

    /// Messages and conditions that were tolerated rather than treated as errors.
    pub fn events(&self) -> &[PeerEvent] {
        &self.events
    }

    pub fn into_transport(self) -> T {
        self.transport
    }

    fn network(&self) -> NetworkId {
        self.config.network
    }

    fn send(&mut self, msg: &WireMessage) -> Result<(), PeerError> {
        let frame = msg.to_frame(self.network()).map_err(PeerError::Encode)?;
        trace!("-> {} {} bytes", msg.command(), frame.len());
        let r = self
            .transport
            .write_all(&frame)
            .and_then(|_| self.transport.flush());
        r.map_err(|e| self.fail(PeerError::Io(e.to_string())))
    }

    fn fail(&mut self, e: PeerError) -> PeerError {
        self.state = SessionState::Closed;
        e
    }

    /// Next framed message before `deadline`, as raw command and payload.
    fn recv(&mut self, deadline: Instant) -> Result<(String, Vec<u8>), RecvError> {
        let mut chunk = [0u8; 16 * 1024];
        loop {
            match unframe_message(&self.buf, self.network()) {
                Ok(frame) => {
                    self.buf.drain(..frame.consumed);
                    if frame.skipped > 0 {
                        self.events.push(PeerEvent::GarbageSkipped(frame.skipped));
                    }
                    trace!("<- {} {} bytes", frame.command, frame.payload.len());
                    return Ok((frame.command, frame.payload));
                }
                Err(FrameError::NeedMoreData) => {}
                Err(FrameError::WrongNetwork) => {
                    return Err(self.fail(PeerError::WrongNetwork).into())
                }
                Err(e) => return Err(self.fail(PeerError::Frame(e)).into()),
            }
            let now = Instant::now();
            if now >= deadline {
                return Err(RecvError::Timeout);
            }
            self.transport
                .set_read_timeout(Some(deadline - now))
                .map_err(|e| self.fail(PeerError::Io(e.to_string())))?;
            match self.transport.read(&mut chunk) {
                Ok(0) => return Err(self.fail(PeerError::Closed).into()),
                Ok(n) => self.buf.extend_from_slice(&chunk[..n]),
                Err(e)
                    if matches!(
                        e.kind(),
                        io::ErrorKind::TimedOut | io::ErrorKind::WouldBlock
                    ) => {}
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(self.fail(PeerError::Io(e.to_string())).into()),
            }
        }
    }

    fn decode_or_fail(&mut self, command: &str, payload: &[u8]) -> Result<WireMessage, PeerError> {
        WireMessage::decode(command, payload).map_err(|source| {
            self.fail(PeerError::Decode {
                command: command.to_string(),
                source,
            })
        })
    }

    /// Handle traffic that is legal at any time after the handshake: answer
    /// pings, record everything else as an event.
    fn background(&mut self, command: &str, payload: &[u8]) -> Result<(), PeerError> {
        match command {
            "ping" => {
                if let WireMessage::Ping(n) = self.decode_or_fail(command, payload)? {
                    self.send(&WireMessage::Pong(n))?;
                }
            }
            "inv" => {
                if let Ok(items) = decode_inv(payload) {
                    for item in items.iter().filter(|i| !i.inv_type.is_known()) {
                        self.events
                            .push(PeerEvent::UnknownInvType(item.inv_type.code()));
                    }
                }
                self.events.push(PeerEvent::Ignored("inv".into()));
            }
            other if !KNOWN_COMMANDS.contains(&other) => {
                self.events
                    .push(PeerEvent::UnknownCommand(other.to_string()));
            }
            other => self.events.push(PeerEvent::Ignored(other.to_string())),
        }
        Ok(())
    }

    /// version → version ← verack → verack ←, accepting the remote verack
    /// before or after its version.
    pub fn handshake(&mut self) -> Result<(), PeerError> {
        if self.state != SessionState::Connected {
            return Err(PeerError::ProtocolViolation(format!(
                "handshake from state {:?}",
                self.state
            )));
        }
        let nonce = NonZeroU64::new(rand::thread_rng().gen_range(1..=u64::MAX)).unwrap();
        let timestamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs() as i64);
        let vcfg = VersionConfig {
            user_agent: self.config.user_agent.clone(),
            ..VersionConfig::default()
        };
        self.send(&build_version(&vcfg, nonce, timestamp))?;
        self.state = SessionState::VersionSent;

        let deadline = Instant::now() + self.config.handshake_timeout;
        while self.remote_version.is_none() || !self.remote_verack {
            let (command, payload) = match self.recv(deadline) {
                Ok(m) => m,
                Err(RecvError::Timeout) => return Err(self.fail(PeerError::HandshakeTimeout)),
                Err(RecvError::Peer(e)) => return Err(e),
            };
            match command.as_str() {
                "version" => {
                    if self.remote_version.is_some() {
                        return Err(
                            self.fail(PeerError::ProtocolViolation("duplicate version".into()))
                        );
                    }
                    let v = decode_version(&payload).map_err(|e| {
                        self.fail(PeerError::ProtocolViolation(format!(
                            "undecodable version: {e}"
                        )))
                    })?;
                    if v.nonce == nonce.get() {
                        return Err(
                            self.fail(PeerError::ProtocolViolation("connected to self".into()))
                        );
                    }
                    debug!(
                        "{} is {} at height {}",
                        self.config.address, v.user_agent, v.start_height
                    );
                    self.remote_version = Some(v);
                    self.state = SessionState::VersionReceived;
                    self.send(&build_verack())?;
                }
                "verack" => self.remote_verack = true,
                other if self.remote_version.is_none() => {
                    return Err(self.fail(PeerError::ProtocolViolation(format!(
                        "{other} before version"
                    ))));
                }
                other => self.background(other, &payload)?,
            }
        }
        self.state = SessionState::Established;
        Ok(())
    }

    fn require_established(&self) -> Result<(), PeerError> {
        if self.state == SessionState::Established {
            Ok(())
        } else {
            Err(PeerError::NotEstablished(self.state))
        }
    }

    /// Request one block and verify it against `hash`.
    pub fn fetch_block(&mut self, hash: &Hash256) -> Result<Block, PeerError> {
        self.fetch_block_raw(hash).map(|(b, _)| b)
    }

    /// As [`fetch_block`](Self::fetch_block), also returning the exact bytes received.
    pub fn fetch_block_raw(&mut self, hash: &Hash256) -> Result<(Block, Vec<u8>), PeerError> {
        self.require_established()?;
        self.send(&build_getdata(&[InventoryVector::block(*hash)]).map_err(PeerError::Encode)?)?;
        let deadline = Instant::now() + self.config.read_timeout;
        loop {
            let (command, payload) = self.recv_or_timeout(deadline)?;
            match command.as_str() {
                "block" => {
                    let block = decode_block(&payload)
                        .map_err(|source| PeerError::Decode { command, source })?;
                    block.check_integrity(hash).map_err(PeerError::Integrity)?;
                    return Ok((block, payload));
                }
                "notfound" => {
                    let items = decode_inv(&payload)
                        .map_err(|source| PeerError::Decode { command, source })?;
                    if items.iter().any(|i| i.hash == *hash) {
                        return Err(PeerError::NotFound(*hash));
                    }
                }
                other => self.background(other, &payload)?,
            }
        }
    }

    fn recv_or_timeout(&mut self, deadline: Instant) -> Result<(String, Vec<u8>), PeerError> {
        match self.recv(deadline) {
            Ok(m) => Ok(m),
            Err(RecvError::Timeout) => Err(PeerError::ReadTimeout),
            Err(RecvError::Peer(e)) => Err(e),
        }
    }

    /// Block hashes following `locator`, in chain order, up to and including
    /// `stop` (or the peer's tip when `stop` is zero).
    pub fn sync_range(
        &mut self,
        locator: &[Hash256],
        stop: Hash256,
    ) -> Result<Vec<Hash256>, PeerError> {
        self.require_established()?;
        let mut out: Vec<Hash256> = Vec::new();
        let mut next_locator = locator.to_vec();
        loop {
            self.send(&build_getblocks(&next_locator, stop).map_err(PeerError::Encode)?)?;
            let deadline = Instant::now() + self.config.read_timeout;
            let batch = loop {
                let (command, payload) = self.recv_or_timeout(deadline)?;
                if command != "inv" {
                    self.background(&command, &payload)?;
                    continue;
                }
                let items =
                    decode_inv(&payload).map_err(|source| PeerError::Decode { command, source })?;
                let blocks: Vec<Hash256> = items
                    .iter()
                    .filter(|i| i.inv_type.is_block())
                    .map(|i| i.hash)
                    .collect();
                if blocks.is_empty() && !items.is_empty() {
                    // Transaction announcements, not our answer.
                    self.events.push(PeerEvent::Ignored("inv".into()));
                    continue;
                }
                break blocks;
            };
            let full = batch.len() >= GETBLOCKS_BATCH;
            for h in batch {
                out.push(h);
                if !stop.is_zero() && h == stop {
                    return Ok(out);
                }
            }
            match (full, out.last()) {
                (true, Some(last)) => next_locator = vec![*last],
                _ => return Ok(out),
            }
        }
    }

    /// Ask for peer addresses. A peer that stays silent until the read
    /// timeout yields an empty list.
    pub fn discover_peers(&mut self) -> Result<Vec<NetAddress>, PeerError> {
        self.require_established()?;
        self.send(&build_getaddr())?;
        let deadline = Instant::now() + self.config.read_timeout;
        loop {
            let (command, payload) = match self.recv(deadline) {
                Ok(m) => m,
                Err(RecvError::Timeout) => return Ok(Vec::new()),
                Err(RecvError::Peer(e)) => return Err(e),
            };
            if command == "addr" {
                let entries: Vec<AddrEntry> = decode_addr(&payload).map_err(|e| match e {
                    DecodeError::TooManyEntries(n) => self.fail(PeerError::ProtocolViolation(
                        format!("addr with {n} entries"),
                    )),
                    source => PeerError::Decode {
                        command: "addr".into(),
                        source,
                    },
                })?;
                return Ok(entries.into_iter().map(|e| e.addr).collect());
            }
            self.background(&command, &payload)?;
        }
    }
}

/// Open a session over `transport` and complete the handshake.
pub fn handshake<T: Transport>(
    config: PeerConfig,
    transport: T,
) -> Result<PeerSession<T>, PeerError> {
    let mut s = PeerSession::new(config, transport);
    s.handshake()?;
    Ok(s)
}

impl PeerConfig {
    pub fn with_timeouts(mut self, handshake: Duration, read: Duration) -> Self {
        self.handshake_timeout = handshake;
        self.read_timeout = read;
        self
    }
}
