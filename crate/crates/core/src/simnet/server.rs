//! The simulated full node.

use std::collections::HashMap;
use std::io;
use std::net::{SocketAddr, TcpListener};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use log::debug;
use serde::Serialize;

use super::script::{FaultKind, SimScript};
use crate::peer::{memory_pair, Connector, MemoryStream, PeerConfig, Transport};
use crate::wire::{
    encode_varint, frame_with_magic, unframe_message, AddrEntry, Block, FrameError, GetBlocks,
    InvType, InventoryVector, NetworkId, WireMessage, GETBLOCKS_BATCH, MAINNET_MAGIC,
    TESTNET3_MAGIC,
};

const POLL_INTERVAL: Duration = Duration::from_millis(50);
const ADDR_TIMESTAMP: u32 = 1_700_000_000;
const NOISE_COMMAND: &str = "simnoise";
const NOISE_INV_TYPE: u32 = 0x7;

pub type ConnectionId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Inbound,
    Outbound,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TranscriptEntry {
    pub direction: Direction,
    /// `<garbage>` for raw bytes written outside any frame.
    pub command: String,
    pub payload: Vec<u8>,
    /// The exact bytes on the wire, header included.
    pub raw: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SimError {
    #[error("no connection with id {0}")]
    UnknownConnection(ConnectionId),
}

struct Inner {
    script: SimScript,
    transcripts: Mutex<Vec<Vec<TranscriptEntry>>>,
    shutdown: AtomicBool,
    threads: Mutex<Vec<JoinHandle<()>>>,
}

/// Handle to a running simulated node. Clones share the same node.
#[derive(Clone)]
pub struct SimServer {
    inner: Arc<Inner>,
}

impl SimServer {
    pub fn start(script: SimScript) -> Self {
        SimServer {
            inner: Arc::new(Inner {
                script,
                transcripts: Mutex::new(Vec::new()),
                shutdown: AtomicBool::new(false),
                threads: Mutex::new(Vec::new()),
            }),
        }
    }

    pub fn script(&self) -> &SimScript {
        &self.inner.script
    }

    /// Open a connection over an in-memory pipe. Returns the connection id
    /// and the client's end.
    pub fn connect_in_process(&self) -> (ConnectionId, MemoryStream) {
        let (client, server) = memory_pair();
        let id = self.spawn_connection(server);
        (id, client)
    }

    /// Accept TCP connections on `addr` until shutdown. Returns the bound
    /// address, which is useful with port 0.
    pub fn listen_tcp(&self, addr: SocketAddr) -> io::Result<SocketAddr> {
        let listener = TcpListener::bind(addr)?;
        let local = listener.local_addr()?;
        listener.set_nonblocking(true)?;
        let server = self.clone();
        let handle = thread::spawn(move || loop {
            if server.inner.shutdown.load(Ordering::SeqCst) {
                return;
            }
            match listener.accept() {
                Ok((stream, peer)) => {
                    debug!("simnet accepted {peer}");
                    if stream.set_nonblocking(false).is_ok() {
                        server.spawn_connection(stream);
                    }
                }
                Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                    thread::sleep(Duration::from_millis(10))
                }
                Err(e) => {
                    debug!("simnet accept failed: {e}");
                    return;
                }
            }
        });
        self.inner.threads.lock().unwrap().push(handle);
        Ok(local)
    }

    fn spawn_connection<T: Transport + 'static>(&self, stream: T) -> ConnectionId {
        let id = {
            let mut t = self.inner.transcripts.lock().unwrap();
            t.push(Vec::new());
            t.len() - 1
        };
        let inner = Arc::clone(&self.inner);
        let handle = thread::spawn(move || {
            let mut conn = Connection {
                inner,
                id,
                stream,
                buf: Vec::new(),
            };
            if let Err(e) = conn.run() {
                debug!("simnet connection {id} ended: {e}");
            }
        });
        self.inner.threads.lock().unwrap().push(handle);
        id
    }

    /// Ids of every connection accepted so far, in order.
    pub fn connection_ids(&self) -> Vec<ConnectionId> {
        (0..self.inner.transcripts.lock().unwrap().len()).collect()
    }

    pub fn transcript(&self, id: ConnectionId) -> Result<Vec<TranscriptEntry>, SimError> {
        self.inner
            .transcripts
            .lock()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or(SimError::UnknownConnection(id))
    }

    /// Stop accepting, close every connection and wait for the threads.
    pub fn shutdown(&self) {
        self.inner.shutdown.store(true, Ordering::SeqCst);
        let handles: Vec<_> = self.inner.threads.lock().unwrap().drain(..).collect();
        for h in handles {
            let _ = h.join();
        }
    }
}

struct Connection<T: Transport> {
    inner: Arc<Inner>,
    id: ConnectionId,
    stream: T,
    buf: Vec<u8>,
}

impl<T: Transport> Connection<T> {
    fn script(&self) -> &SimScript {
        &self.inner.script
    }

    fn record(&self, entry: TranscriptEntry) {
        self.inner.transcripts.lock().unwrap()[self.id].push(entry);
    }

    fn run(&mut self) -> io::Result<()> {
        self.stream.set_read_timeout(Some(POLL_INTERVAL))?;
        let mut chunk = [0u8; 8192];
        loop {
            if self.inner.shutdown.load(Ordering::SeqCst) {
                return Ok(());
            }
            match self.stream.read(&mut chunk) {
                Ok(0) => return Ok(()),
                Ok(n) => self.buf.extend_from_slice(&chunk[..n]),
                Err(e)
                    if matches!(
                        e.kind(),
                        io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut
                    ) =>
                {
                    continue
                }
                Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                Err(e) => return Err(e),
            }
            loop {
                match unframe_message(&self.buf, self.script().network) {
                    Ok(frame) => {
                        let raw = self.buf[frame.skipped..frame.consumed].to_vec();
                        self.buf.drain(..frame.consumed);
                        self.record(TranscriptEntry {
                            direction: Direction::Inbound,
                            command: frame.command.clone(),
                            payload: frame.payload.clone(),
                            raw,
                        });
                        self.handle(&frame.command, &frame.payload)?;
                    }
                    Err(FrameError::NeedMoreData) => break,
                    Err(e) => {
                        // A real node disconnects on unparseable traffic.
                        return Err(io::Error::new(io::ErrorKind::InvalidData, e.to_string()));
                    }
                }
            }
        }
    }

    fn handle(&mut self, command: &str, payload: &[u8]) -> io::Result<()> {
        let replies = match WireMessage::decode(command, payload) {
            Ok(msg) => self.replies_to(&msg),
            Err(e) => {
                debug!("simnet could not decode inbound {command}: {e}");
                Vec::new()
            }
        };
        if replies.is_empty() {
            return Ok(());
        }
        let faults: Vec<FaultKind> = self
            .script()
            .faults
            .iter()
            .filter(|f| f.applies_to.matches(command))
            .map(|f| f.kind.clone())
            .collect();
        let wrong_magic = faults.iter().any(|k| matches!(k, FaultKind::WrongMagic));
        for kind in &faults {
            match kind {
                FaultKind::Stall { seconds } => {
                    thread::sleep(Duration::from_secs_f64(seconds.max(0.0)))
                }
                FaultKind::SendGarbage { bytes } => {
                    self.stream.write_all(bytes)?;
                    self.record(TranscriptEntry {
                        direction: Direction::Outbound,
                        command: "<garbage>".into(),
                        payload: bytes.clone(),
                        raw: bytes.clone(),
                    });
                }
                FaultKind::Noise { count } => {
                    for i in 0..*count {
                        self.send(&noise(i), wrong_magic)?;
                    }
                }
                _ => {}
            }
        }
        for reply in replies {
            self.send(&reply, wrong_magic)?;
        }
        self.stream.flush()
    }

    fn send(&mut self, msg: &Reply, wrong_magic: bool) -> io::Result<()> {
        let (command, payload) = match msg {
            Reply::Message(m) => (m.command().to_string(), m.payload()),
            Reply::Raw { command, payload } => (command.clone(), payload.clone()),
        };
        let magic = if wrong_magic {
            foreign_magic(self.script().network)
        } else {
            self.script().network.magic()
        };
        let raw = frame_with_magic(magic, &command, &payload)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e.to_string()))?;
        self.stream.write_all(&raw)?;
        self.record(TranscriptEntry {
            direction: Direction::Outbound,
            command,
            payload,
            raw,
        });
        Ok(())
    }

    fn has_fault(&self, command: &str, pred: impl Fn(&FaultKind) -> bool) -> bool {
        self.script()
            .faults
            .iter()
            .any(|f| f.applies_to.matches(command) && pred(&f.kind))
    }

    fn replies_to(&self, msg: &WireMessage) -> Vec<Reply> {
        let script = self.script();
        match msg {
            WireMessage::Version(_) => {
                let mut out = vec![Reply::Message(WireMessage::Version(
                    script.version_reply.clone(),
                ))];
                if !self.has_fault("version", |k| matches!(k, FaultKind::DropVerack)) {
                    out.push(Reply::Message(WireMessage::Verack));
                }
                out
            }
            WireMessage::Ping(n) => vec![Reply::Message(WireMessage::Pong(*n))],
            WireMessage::GetAddr => {
                let entries = script
                    .addr_reply
                    .iter()
                    .map(|addr| AddrEntry {
                        timestamp: ADDR_TIMESTAMP,
                        addr: addr.clone(),
                    })
                    .collect();
                vec![Reply::Message(WireMessage::Addr(entries))]
            }
            WireMessage::GetBlocks(req) => {
                vec![Reply::Message(WireMessage::Inv(self.successors(req)))]
            }
            WireMessage::GetData(items) => self.serve_getdata(items),
            _ => Vec::new(),
        }
    }

    fn successors(&self, req: &GetBlocks) -> Vec<InventoryVector> {
        let chain = &self.script().chain;
        let start = req
            .locator
            .iter()
            .find_map(|h| chain.iter().position(|b| b.block_hash() == *h))
            .map_or(1, |i| i + 1);
        let mut out = Vec::new();
        for block in chain.iter().skip(start).take(GETBLOCKS_BATCH) {
            let hash = block.block_hash();
            out.push(InventoryVector::block(hash));
            if hash == req.stop {
                break;
            }
        }
        out
    }

    fn serve_getdata(&self, items: &[InventoryVector]) -> Vec<Reply> {
        let mut replies = Vec::new();
        let mut missing = Vec::new();
        for item in items {
            let found = item
                .inv_type
                .is_block()
                .then(|| {
                    self.script()
                        .chain
                        .iter()
                        .position(|b| b.block_hash() == item.hash)
                })
                .flatten();
            match found {
                Some(idx) => {
                    let witness = item.inv_type == InvType::WitnessBlock;
                    replies.push(Reply::Raw {
                        command: "block".into(),
                        payload: self.block_payload(idx, witness),
                    });
                }
                None => missing.push(*item),
            }
        }
        if !missing.is_empty() {
            replies.push(Reply::Message(WireMessage::NotFound(missing)));
        }
        replies
    }

    fn block_payload(&self, idx: usize, witness: bool) -> Vec<u8> {
        let block = &self.script().chain[idx];
        let mut raw = if witness {
            block.encode()
        } else {
            block.encode_stripped()
        };
        for f in self
            .script()
            .faults
            .iter()
            .filter(|f| f.applies_to.matches("getdata"))
        {
            match f.kind {
                FaultKind::TamperTxByte { block: b, tx, byte } if b == idx => {
                    if let Some(off) = tx_offset(block, tx, witness) {
                        let len = tx_len(&block.transactions[tx], witness);
                        if byte < len {
                            raw[off + byte] ^= 0x01;
                        }
                    }
                }
                FaultKind::TruncateBlock { bytes } => raw.truncate(raw.len().saturating_sub(bytes)),
                _ => {}
            }
        }
        raw
    }
}

enum Reply {
    Message(WireMessage),
    /// A pre-serialized payload, possibly deliberately corrupt.
    Raw {
        command: String,
        payload: Vec<u8>,
    },
}

fn noise(i: usize) -> Reply {
    match i % 3 {
        0 => Reply::Message(WireMessage::Ping(0x6e6f_6973_6500_0000 | i as u64)),
        1 => Reply::Message(WireMessage::Inv(vec![InventoryVector {
            inv_type: InvType::Unknown(NOISE_INV_TYPE),
            hash: crate::wire::sha256d(&i.to_le_bytes()),
        }])),
        _ => Reply::Raw {
            command: NOISE_COMMAND.into(),
            payload: vec![i as u8],
        },
    }
}

fn foreign_magic(network: NetworkId) -> [u8; 4] {
    if network == NetworkId::Mainnet {
        TESTNET3_MAGIC
    } else {
        MAINNET_MAGIC
    }
}

fn tx_len(tx: &crate::wire::Transaction, witness: bool) -> usize {
    if witness {
        tx.encode().len()
    } else {
        tx.encode_legacy().len()
    }
}

/// Byte offset of transaction `tx` within the serialized block.
fn tx_offset(block: &Block, tx: usize, witness: bool) -> Option<usize> {
    if tx >= block.transactions.len() {
        return None;
    }
    let mut off = crate::wire::HEADER_SIZE + encode_varint(block.transactions.len() as u64).len();
    for t in &block.transactions[..tx] {
        off += tx_len(t, witness);
    }
    Some(off)
}

/// Routes peer addresses to in-process simulated nodes, for code that
/// connects through a [`Connector`].
#[derive(Clone, Default)]
pub struct SimConnector {
    servers: HashMap<String, SimServer>,
}

impl SimConnector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, address: impl Into<String>, server: SimServer) {
        self.servers.insert(address.into(), server);
    }
}

impl Connector for SimConnector {
    fn connect(&self, config: &PeerConfig) -> io::Result<Box<dyn Transport>> {
        let server = self
            .servers
            .get(&config.address)
            .ok_or(io::ErrorKind::ConnectionRefused)?;
        let (_, stream) = server.connect_in_process();
        Ok(Box::new(stream))
    }
}
