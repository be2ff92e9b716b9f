//! Typed P2P messages and their payload codecs.

use std::net::{IpAddr, Ipv4Addr, Ipv6Addr, SocketAddr};
use std::num::NonZeroU64;

use super::block::{decode_block, Block};
use super::codec::{write_var_bytes, write_varint, Reader};
use super::frame::frame_message;
use super::hash::Hash256;
use super::network::NetworkId;
use super::tx::{decode_transaction, Transaction};
use super::{DecodeError, EncodeError};

pub const PROTOCOL_VERSION: i32 = 70015;
pub const MAX_ADDR_ENTRIES: u64 = 1000;
pub const MAX_INV_ENTRIES: u64 = 50_000;
pub const MAX_LOCATOR_HASHES: u64 = 2000;
/// Inventory batch size a full node uses when answering `getblocks`.
pub const GETBLOCKS_BATCH: usize = 500;

/// Payload bytes up to and including `start_height`, with an empty user agent.
const MIN_VERSION_LEN: usize = 4 + 8 + 8 + 26 + 26 + 8 + 1 + 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NetAddress {
    pub services: u64,
    /// IPv6, or IPv4 mapped into `::ffff:a.b.c.d`.
    pub ip: [u8; 16],
    pub port: u16,
}

impl NetAddress {
    pub const ENCODED_LEN: usize = 26;

    pub fn new(addr: SocketAddr, services: u64) -> Self {
        let ip = match addr.ip() {
            IpAddr::V4(v4) => v4.to_ipv6_mapped().octets(),
            IpAddr::V6(v6) => v6.octets(),
        };
        NetAddress {
            services,
            ip,
            port: addr.port(),
        }
    }

    pub fn unspecified() -> Self {
        NetAddress::new(SocketAddr::new(Ipv4Addr::UNSPECIFIED.into(), 0), 0)
    }

    pub fn ip_addr(&self) -> IpAddr {
        let v6 = Ipv6Addr::from(self.ip);
        match v6.to_ipv4_mapped() {
            Some(v4) => IpAddr::V4(v4),
            None => IpAddr::V6(v6),
        }
    }

    pub fn socket_addr(&self) -> SocketAddr {
        SocketAddr::new(self.ip_addr(), self.port)
    }

    pub(crate) fn encode_into(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.services.to_le_bytes());
        out.extend_from_slice(&self.ip);
        out.extend_from_slice(&self.port.to_be_bytes());
    }

    pub(crate) fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(NetAddress {
            services: r.u64_le()?,
            ip: r.array()?,
            port: r.u16_be()?,
        })
    }
}

/// A timestamped address as carried in `addr` messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AddrEntry {
    pub timestamp: u32,
    pub addr: NetAddress,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VersionPayload {
    pub protocol_version: i32,
    pub services: u64,
    pub timestamp: i64,
    pub addr_recv: NetAddress,
    pub addr_from: NetAddress,
    pub nonce: u64,
    pub user_agent: String,
    pub start_height: i32,
    /// Absent on the wire before protocol 70001, which means "relay".
    pub relay: bool,
}

/// First protocol version that carries the relay flag.
pub const RELAY_FLAG_VERSION: i32 = 70001;

impl VersionPayload {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(MIN_VERSION_LEN + self.user_agent.len() + 1);
        out.extend_from_slice(&self.protocol_version.to_le_bytes());
        out.extend_from_slice(&self.services.to_le_bytes());
        out.extend_from_slice(&self.timestamp.to_le_bytes());
        self.addr_recv.encode_into(&mut out);
        self.addr_from.encode_into(&mut out);
        out.extend_from_slice(&self.nonce.to_le_bytes());
        write_var_bytes(&mut out, self.user_agent.as_bytes());
        out.extend_from_slice(&self.start_height.to_le_bytes());
        if self.protocol_version >= RELAY_FLAG_VERSION {
            out.push(self.relay as u8);
        }
        out
    }
}

/// Parse a `version` payload. Bytes after the relay flag are ignored.
pub fn decode_version(payload: &[u8]) -> Result<VersionPayload, DecodeError> {
    if payload.len() < MIN_VERSION_LEN {
        return Err(DecodeError::Truncated);
    }
    let mut r = Reader::new(payload);
    let protocol_version = r.i32_le()?;
    let services = r.u64_le()?;
    let timestamp = r.i64_le()?;
    let addr_recv = NetAddress::decode_from(&mut r)?;
    let addr_from = NetAddress::decode_from(&mut r)?;
    let nonce = r.u64_le()?;
    let ua = r.var_bytes()?;
    let user_agent = String::from_utf8_lossy(&ua).into_owned();
    let start_height = r.i32_le()?;
    let relay = if r.is_empty() { true } else { r.u8()? != 0 };
    Ok(VersionPayload {
        protocol_version,
        services,
        timestamp,
        addr_recv,
        addr_from,
        nonce,
        user_agent,
        start_height,
        relay,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InvType {
    Tx,
    Block,
    WitnessTx,
    WitnessBlock,
    /// Preserved verbatim; surfaced to callers rather than rejected.
    Unknown(u32),
}

impl InvType {
    pub fn code(self) -> u32 {
        match self {
            InvType::Tx => 1,
            InvType::Block => 2,
            InvType::WitnessTx => 0x4000_0001,
            InvType::WitnessBlock => 0x4000_0002,
            InvType::Unknown(c) => c,
        }
    }

    pub fn from_code(code: u32) -> Self {
        match code {
            1 => InvType::Tx,
            2 => InvType::Block,
            0x4000_0001 => InvType::WitnessTx,
            0x4000_0002 => InvType::WitnessBlock,
            c => InvType::Unknown(c),
        }
    }

    pub fn is_known(self) -> bool {
        !matches!(self, InvType::Unknown(_))
    }

    pub fn is_block(self) -> bool {
        matches!(self, InvType::Block | InvType::WitnessBlock)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct InventoryVector {
    pub inv_type: InvType,
    pub hash: Hash256,
}

impl InventoryVector {
    pub fn block(hash: Hash256) -> Self {
        InventoryVector {
            inv_type: InvType::Block,
            hash,
        }
    }
}

pub fn encode_inv(items: &[InventoryVector]) -> Vec<u8> {
    let mut out = Vec::with_capacity(9 + 36 * items.len());
    write_varint(&mut out, items.len() as u64);
    for item in items {
        out.extend_from_slice(&item.inv_type.code().to_le_bytes());
        out.extend_from_slice(item.hash.as_bytes());
    }
    out
}

/// Parse an `inv`, `getdata` or `notfound` payload.
pub fn decode_inv(payload: &[u8]) -> Result<Vec<InventoryVector>, DecodeError> {
    let mut r = Reader::new(payload);
    let n = r.count(MAX_INV_ENTRIES)?;
    let mut items = Vec::with_capacity(n.min(1024));
    for _ in 0..n {
        let inv_type = InvType::from_code(r.u32_le()?);
        items.push(InventoryVector {
            inv_type,
            hash: Hash256(r.array()?),
        });
    }
    expect_end(&r)?;
    Ok(items)
}

pub fn encode_addr(entries: &[AddrEntry]) -> Vec<u8> {
    let mut out = Vec::with_capacity(9 + 30 * entries.len());
    write_varint(&mut out, entries.len() as u64);
    for e in entries {
        out.extend_from_slice(&e.timestamp.to_le_bytes());
        e.addr.encode_into(&mut out);
    }
    out
}

/// Parse an `addr` payload; more than 1000 entries is a protocol violation.
pub fn decode_addr(payload: &[u8]) -> Result<Vec<AddrEntry>, DecodeError> {
    let mut r = Reader::new(payload);
    let n = r.count(MAX_ADDR_ENTRIES)?;
    let mut entries = Vec::with_capacity(n);
    for _ in 0..n {
        let timestamp = r.u32_le()?;
        entries.push(AddrEntry {
            timestamp,
            addr: NetAddress::decode_from(&mut r)?,
        });
    }
    expect_end(&r)?;
    Ok(entries)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GetBlocks {
    pub version: u32,
    pub locator: Vec<Hash256>,
    pub stop: Hash256,
}

impl GetBlocks {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + 9 + 32 * (self.locator.len() + 1));
        out.extend_from_slice(&self.version.to_le_bytes());
        write_varint(&mut out, self.locator.len() as u64);
        for h in &self.locator {
            out.extend_from_slice(h.as_bytes());
        }
        out.extend_from_slice(self.stop.as_bytes());
        out
    }

    pub fn decode(payload: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(payload);
        let version = r.u32_le()?;
        let n = r.count(MAX_LOCATOR_HASHES)?;
        let mut locator = Vec::with_capacity(n);
        for _ in 0..n {
            locator.push(Hash256(r.array()?));
        }
        let stop = Hash256(r.array()?);
        expect_end(&r)?;
        Ok(GetBlocks {
            version,
            locator,
            stop,
        })
    }
}

fn expect_end(r: &Reader<'_>) -> Result<(), DecodeError> {
    if r.is_empty() {
        Ok(())
    } else {
        Err(DecodeError::TrailingBytes(r.remaining()))
    }
}

fn decode_nonce(payload: &[u8]) -> Result<u64, DecodeError> {
    let mut r = Reader::new(payload);
    let n = r.u64_le()?;
    expect_end(&r)?;
    Ok(n)
}

/// A P2P message this toolkit understands. Anything else is carried as
/// `Unknown` so it can be surfaced as an event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WireMessage {
    Version(VersionPayload),
    Verack,
    Ping(u64),
    Pong(u64),
    GetAddr,
    Addr(Vec<AddrEntry>),
    Inv(Vec<InventoryVector>),
    GetData(Vec<InventoryVector>),
    NotFound(Vec<InventoryVector>),
    GetBlocks(GetBlocks),
    Block(Block),
    Tx(Transaction),
    Unknown { command: String, payload: Vec<u8> },
}

impl WireMessage {
    pub fn command(&self) -> &str {
        match self {
            WireMessage::Version(_) => "version",
            WireMessage::Verack => "verack",
            WireMessage::Ping(_) => "ping",
            WireMessage::Pong(_) => "pong",
            WireMessage::GetAddr => "getaddr",
            WireMessage::Addr(_) => "addr",
            WireMessage::Inv(_) => "inv",
            WireMessage::GetData(_) => "getdata",
            WireMessage::NotFound(_) => "notfound",
            WireMessage::GetBlocks(_) => "getblocks",
            WireMessage::Block(_) => "block",
            WireMessage::Tx(_) => "tx",
            WireMessage::Unknown { command, .. } => command,
        }
    }

    pub fn payload(&self) -> Vec<u8> {
        match self {
            WireMessage::Version(v) => v.encode(),
            WireMessage::Verack | WireMessage::GetAddr => Vec::new(),
            WireMessage::Ping(n) | WireMessage::Pong(n) => n.to_le_bytes().to_vec(),
            WireMessage::Addr(entries) => encode_addr(entries),
            WireMessage::Inv(items)
            | WireMessage::GetData(items)
            | WireMessage::NotFound(items) => encode_inv(items),
            WireMessage::GetBlocks(g) => g.encode(),
            WireMessage::Block(b) => b.encode(),
            WireMessage::Tx(tx) => tx.encode(),
            WireMessage::Unknown { payload, .. } => payload.clone(),
        }
    }

    pub fn decode(command: &str, payload: &[u8]) -> Result<Self, DecodeError> {
        Ok(match command {
            "version" => WireMessage::Version(decode_version(payload)?),
            "verack" => WireMessage::Verack,
            "ping" => WireMessage::Ping(decode_nonce(payload)?),
            "pong" => WireMessage::Pong(decode_nonce(payload)?),
            "getaddr" => WireMessage::GetAddr,
            "addr" => WireMessage::Addr(decode_addr(payload)?),
            "inv" => WireMessage::Inv(decode_inv(payload)?),
            "getdata" => WireMessage::GetData(decode_inv(payload)?),
            "notfound" => WireMessage::NotFound(decode_inv(payload)?),
            "getblocks" => WireMessage::GetBlocks(GetBlocks::decode(payload)?),
            "block" => WireMessage::Block(decode_block(payload)?),
            "tx" => {
                let (tx, used) = decode_transaction(payload)?;
                if used != payload.len() {
                    return Err(DecodeError::TrailingBytes(payload.len() - used));
                }
                WireMessage::Tx(tx)
            }
            other => WireMessage::Unknown {
                command: other.to_string(),
                payload: payload.to_vec(),
            },
        })
    }

    /// Header plus payload, ready to write to a peer.
    pub fn to_frame(&self, network: NetworkId) -> Result<Vec<u8>, EncodeError> {
        frame_message(network, self.command(), &self.payload())
    }
}

/// Fields of our own `version` message that come from configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VersionConfig {
    pub protocol_version: i32,
    pub services: u64,
    pub user_agent: String,
    pub start_height: i32,
    pub relay: bool,
    pub remote: Option<SocketAddr>,
}

impl Default for VersionConfig {
    fn default() -> Self {
        VersionConfig {
            protocol_version: PROTOCOL_VERSION,
            services: 0,
            user_agent: format!("/oprv:{}/", env!("CARGO_PKG_VERSION")),
            start_height: 0,
            relay: false,
            remote: None,
        }
    }
}

pub fn build_version(cfg: &VersionConfig, nonce: NonZeroU64, timestamp: i64) -> WireMessage {
    let addr_recv = cfg
        .remote
        .map(|a| NetAddress::new(a, 0))
        .unwrap_or_else(NetAddress::unspecified);
    WireMessage::Version(VersionPayload {
        protocol_version: cfg.protocol_version,
        services: cfg.services,
        timestamp,
        addr_recv,
        addr_from: NetAddress {
            services: cfg.services,
            ..NetAddress::unspecified()
        },
        nonce: nonce.get(),
        user_agent: cfg.user_agent.clone(),
        start_height: cfg.start_height,
        relay: cfg.relay,
    })
}

pub fn build_verack() -> WireMessage {
    WireMessage::Verack
}

pub fn build_getaddr() -> WireMessage {
    WireMessage::GetAddr
}

pub fn build_getblocks(locator: &[Hash256], stop: Hash256) -> Result<WireMessage, EncodeError> {
    if locator.is_empty() {
        return Err(EncodeError::EmptyLocator);
    }
    Ok(WireMessage::GetBlocks(GetBlocks {
        version: PROTOCOL_VERSION as u32,
        locator: locator.to_vec(),
        stop,
    }))
}

pub fn build_getdata(items: &[InventoryVector]) -> Result<WireMessage, EncodeError> {
    if items.is_empty() {
        return Err(EncodeError::EmptyItems);
    }
    Ok(WireMessage::GetData(items.to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;

    // A version message captured from a Satoshi 0.7.2 node on mainnet.
    const CAPTURED_VERSION: &str = "f9beb4d976657273696f6e0000000000640000003 58d493262ea0000010000000000000011b2d05000000000010000000000000000000000000000000000ffff000000000000000000000000000000000000000000000000ffff0000000000003b2eb35d8ce617650f2f5361746f7368693a302e372e322fc03e0300";

    #[test]
    fn captured_version_parses() {
        let bytes = hex::decode(CAPTURED_VERSION.replace(' ', "")).unwrap();
        let frame = super::super::frame::unframe_message(&bytes, NetworkId::Mainnet).unwrap();
        assert_eq!(frame.command, "version");
        assert_eq!(frame.skipped, 0);
        let v = decode_version(&frame.payload).unwrap();
        assert_eq!(v.protocol_version, 60002);
        assert!(v.user_agent.starts_with("/Satoshi"));
        assert_eq!(v.start_height, 212_672);
        assert!(v.relay);
    }

    #[test]
    fn default_version_fields() {
        let nonce = NonZeroU64::new(0x1234_5678_9abc_def0).unwrap();
        let msg = build_version(&VersionConfig::default(), nonce, 1_700_000_000);
        let WireMessage::Version(v) = WireMessage::decode("version", &msg.payload()).unwrap()
        else {
            panic!()
        };
        assert_eq!(v.protocol_version, 70015);
        assert!(!v.relay);
        assert_eq!(v.services, 0);
        assert_eq!(v.nonce, nonce.get());
    }

    #[test]
    fn version_truncated_mid_user_agent() {
        let mut cfg = VersionConfig::default();
        cfg.user_agent = "/a-rather-long-user-agent:1.0/".into();
        let payload = build_version(&cfg, NonZeroU64::new(1).unwrap(), 0).payload();
        assert_eq!(decode_version(&payload[..90]), Err(DecodeError::Truncated));
    }

    #[test]
    fn net_address_v4_mapping() {
        let a = NetAddress::new("10.0.0.103:9999".parse().unwrap(), 1);
        let mut out = Vec::new();
        a.encode_into(&mut out);
        assert_eq!(&out[8..18], &[0u8; 10]);
        assert_eq!(&out[18..20], &[0xff, 0xff]);
        assert_eq!(&out[20..24], &[10, 0, 0, 103]);
        assert_eq!(&out[24..26], &[0x27, 0x0f]);
        assert_eq!(a.socket_addr().to_string(), "10.0.0.103:9999");
    }

    #[test]
    fn getdata_block_layout() {
        let h = Hash256([0xab; 32]);
        let payload = build_getdata(&[InventoryVector::block(h)])
            .unwrap()
            .payload();
        let mut expected = vec![0x01, 0x02, 0x00, 0x00, 0x00];
        expected.extend_from_slice(&[0xab; 32]);
        assert_eq!(payload, expected);
        assert_eq!(build_getdata(&[]), Err(EncodeError::EmptyItems));
    }

    #[test]
    fn unknown_inv_type_preserved() {
        let items = vec![InventoryVector {
            inv_type: InvType::from_code(7),
            hash: Hash256([1; 32]),
        }];
        let decoded = decode_inv(&encode_inv(&items)).unwrap();
        assert_eq!(decoded, items);
        assert!(!decoded[0].inv_type.is_known());
    }

    #[test]
    fn getblocks_layout() {
        let msg = build_getblocks(&[Hash256([5; 32])], Hash256::ZERO).unwrap();
        let payload = msg.payload();
        assert_eq!(payload.len(), 4 + 1 + 32 + 32);
        assert_eq!(&payload[..4], &70015u32.to_le_bytes());
        assert_eq!(payload[4], 1);
        assert_eq!(
            build_getblocks(&[], Hash256::ZERO),
            Err(EncodeError::EmptyLocator)
        );
    }

    #[test]
    fn addr_limits() {
        let entry = AddrEntry {
            timestamp: 1,
            addr: NetAddress::new("1.2.3.4:8333".parse().unwrap(), 1),
        };
        let two = vec![entry; 2];
        assert_eq!(decode_addr(&encode_addr(&two)), Ok(two.clone()));
        let many = vec![entry; 1001];
        assert_eq!(
            decode_addr(&encode_addr(&many)),
            Err(DecodeError::TooManyEntries(1001))
        );
        assert_eq!(
            decode_addr(&encode_addr(&two)[..40]),
            Err(DecodeError::Truncated)
        );
    }

    #[test]
    fn verack_and_getaddr_are_empty() {
        assert!(build_verack().payload().is_empty());
        assert!(build_getaddr().payload().is_empty());
    }
}
