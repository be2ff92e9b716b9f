//! Bitcoin P2P wire format and the consensus serialization of blocks and
//! transactions.
//!
//! Everything here is a pure function over byte slices. Integers are
//! little-endian on the wire except the port in a network address.

mod block;
mod codec;
mod frame;
mod hash;
mod message;
mod network;
mod script;
mod tx;

pub use block::{
    decode_block, merkle_root, witness_commitment, Block, BlockHeader, IntegrityFault, HEADER_SIZE,
    WITNESS_COMMITMENT_PREFIX,
};
pub use codec::{decode_varint, encode_varint, varint_len};
pub(crate) use frame::frame_with_magic;
pub use frame::{
    frame_message, unframe_message, Frame, FrameError, MessageHeader, HEADER_LEN, MAX_PAYLOAD_LEN,
};
pub use hash::{checksum, sha256, sha256d, Hash256, HashParseError};
pub use message::{
    build_getaddr, build_getblocks, build_getdata, build_verack, build_version, decode_addr,
    decode_inv, decode_version, encode_addr, encode_inv, AddrEntry, GetBlocks, InvType,
    InventoryVector, NetAddress, VersionConfig, VersionPayload, WireMessage, GETBLOCKS_BATCH,
    MAX_ADDR_ENTRIES, PROTOCOL_VERSION,
};
pub use network::{NetworkId, UnknownNetwork, MAINNET_MAGIC, REGTEST_MAGIC, TESTNET3_MAGIC};
pub use script::{
    extract_op_returns, op_return_data, op_return_script, OpReturnOutput, OpReturnScan,
    MAX_OP_RETURN_DATA, OP_RETURN,
};
pub use tx::{decode_transaction, OutPoint, Transaction, TxIn, TxOut};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DecodeError {
    #[error("input truncated")]
    Truncated,
    #[error("non-minimal compact-size integer")]
    NonMinimal,
    #[error("script length exceeds the remaining bytes")]
    MalformedScriptLength,
    #[error("block declares {declared} transactions but {parsed} were serialized")]
    TxCountMismatch { declared: u64, parsed: u64 },
    #[error("{0} entries exceeds the protocol limit")]
    TooManyEntries(u64),
    #[error("{0} unexpected trailing bytes")]
    TrailingBytes(usize),
    #[error("segwit marker present but every witness is empty")]
    SuperfluousWitness,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EncodeError {
    #[error("command is {0} bytes, limit is 12")]
    CommandTooLong(usize),
    #[error("command must be printable ASCII")]
    InvalidCommand,
    #[error("payload of {0} bytes exceeds the message size limit")]
    PayloadTooLarge(usize),
    #[error("getblocks needs at least one locator hash")]
    EmptyLocator,
    #[error("getdata needs at least one inventory item")]
    EmptyItems,
}
