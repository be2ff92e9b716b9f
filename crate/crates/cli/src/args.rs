use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "oprv",
    version,
    about = "Publish, watch for and detect OP_RETURN rendezvous endpoints"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// TOML config file. Flags override environment, which overrides the file.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// mainnet, testnet3, regtest or simnet.
    #[arg(long, global = true)]
    pub network: Option<String>,
    /// Full node to talk to, host:port. Repeat for a quorum.
    #[arg(long = "peer", global = true, value_name = "HOST:PORT")]
    pub peers: Vec<String>,
    /// Explorer base URL, txid is appended.
    #[arg(long, global = true, value_name = "URL")]
    pub explorer: Option<String>,
    /// 32-byte channel key as 64 hex characters. Prefer RV_KEY.
    #[arg(long, global = true, value_name = "HEX")]
    pub key_hex: Option<String>,
    #[arg(long, global = true, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, global = true)]
    pub min_confirmations: Option<u32>,
    /// Fraction of responding peers that must agree on a block, exclusive.
    #[arg(long, global = true)]
    pub quorum: Option<f64>,
    /// Wallet RPC URL. Credentials come from RPC_USER / RPC_PASSWORD.
    #[arg(long, global = true, value_name = "URL")]
    pub rpc_url: Option<String>,
    #[arg(long, global = true)]
    pub rpc_user: Option<String>,
    #[arg(long, global = true)]
    pub rpc_wallet: Option<String>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Raise log verbosity (-v info, -vv debug, -vvv trace).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,
    /// First retry delay in milliseconds; doubles per attempt.
    #[arg(long, global = true, default_value_t = 500, hide = true)]
    pub retry_base_ms: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum)]
pub enum Format {
    #[default]
    Json,
    Text,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Publish an endpoint through the wallet RPC.
    Publish(PublishArgs),
    /// Scan new blocks for endpoints, once or continuously.
    Watch(WatchArgs),
    /// Same as `watch --once`.
    Scan,
    /// Flag OP_RETURN payloads that look like rendezvous channels.
    Detect(DetectArgs),
    /// Serve a scripted mock full node over TCP until interrupted.
    ServeSim(ServeArgs),
}

#[derive(Debug, Args)]
pub struct PublishArgs {
    /// ip:port, [ipv6]:port, optionally prefixed with tcp://
    pub endpoint: String,
    #[arg(long)]
    pub encrypt: bool,
    /// sat/vB
    #[arg(long, default_value_t = 2)]
    pub fee_rate: u64,
    #[arg(long)]
    pub i_know_this_is_mainnet: bool,
}

#[derive(Debug, Args)]
pub struct WatchArgs {
    #[arg(long, conflicts_with = "follow")]
    pub once: bool,
    #[arg(long)]
    pub follow: bool,
    /// Seconds between polls with --follow.
    #[arg(long, default_value_t = 30)]
    pub interval: u64,
    /// Read one transaction from the explorer instead of the P2P network.
    #[arg(long)]
    pub txid: Option<String>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long, default_value_t = 1)]
    pub from_height: u32,
    /// Inspect one transaction through the explorer.
    #[arg(long)]
    pub txid: Option<String>,
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Scenario JSON. The built-in five-block scenario when omitted.
    pub scenario: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:0")]
    pub bind: SocketAddr,
}
