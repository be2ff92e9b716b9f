//! Writing payloads through a full node's wallet RPC, and the explorer
//! fallback for reading them back.

mod craft;
mod explorer;
mod rpc;

pub use craft::{
    build_op_return_output, craft_and_send, format_btc, list_unspent, node_network, parse_btc,
    select_utxo, verify_unsigned, FeeRate, PublishReceipt, Utxo, DUST_LIMIT_SATS, ESTIMATED_VSIZE,
    MIN_FEE_SATS,
};
pub use explorer::{
    explorer_fetch_tx, parse_explorer_tx, ExplorerError, ExplorerOutput, DEFAULT_EXPLORER_BASE,
};
pub use rpc::{RpcClient, RpcEndpoint, RpcFailure, Secret};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PublishError {
    #[error("RPC authentication failed")]
    RpcAuthFailed,
    #[error("RPC endpoint unreachable: {0}")]
    RpcUnreachable(String),
    #[error("wallet not found: {0}")]
    WalletNotFound(String),
    #[error("invalid RPC URL: {0}")]
    InvalidUrl(String),
    #[error("RPC returned HTTP {0}")]
    Http(u16),
    #[error("{method} failed ({code}): {message}")]
    Rpc {
        method: String,
        code: i64,
        message: String,
    },
    #[error("malformed RPC response: {0}")]
    InvalidResponse(String),
    #[error("payload is empty")]
    EmptyPayload,
    #[error("payload of {0} bytes exceeds 80")]
    PayloadTooLarge(usize),
    #[error("no UTXO covers {needed} sats (largest is {largest})")]
    InsufficientFunds { needed: u64, largest: u64 },
    #[error("signing failed: {0}")]
    SignFailed(String),
    #[error("broadcast rejected: {0}")]
    BroadcastRejected(String),
    #[error("node-built transaction does not match the request: {0}")]
    PayloadMismatch(String),
}
