//! Resolving settings from flags, environment and a TOML file, in that
//! order of precedence.

use std::fmt;
use std::path::{Path, PathBuf};

use oprv_core::peer::Quorum;
use oprv_core::publisher::{RpcEndpoint, Secret};
use oprv_core::rendezvous::KEY_LEN;
use oprv_core::wire::NetworkId;
use serde::Deserialize;

use crate::args::GlobalArgs;
use crate::CliError;

pub const ENV_RPC_USER: &str = "RPC_USER";
pub const ENV_RPC_PASSWORD: &str = "RPC_PASSWORD";
pub const ENV_KEY: &str = "RV_KEY";

/// Contents of `--config`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub network: Option<NetworkId>,
    #[serde(default)]
    pub peers: Vec<String>,
    pub explorer: Option<String>,
    pub key_hex: Option<String>,
    pub checkpoint: Option<PathBuf>,
    pub min_confirmations: Option<u32>,
    pub quorum: Option<f64>,
    pub rpc_url: Option<String>,
    pub rpc_user: Option<String>,
    pub rpc_password: Option<String>,
    pub rpc_wallet: Option<String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))
    }
}

/// A channel key. Never rendered.
#[derive(Clone, PartialEq, Eq)]
pub struct ChannelKey([u8; KEY_LEN]);

impl ChannelKey {
    pub fn from_hex(s: &str) -> Result<Self, CliError> {
        let bad = || {
            CliError::Config(format!(
                "key must be {} hex characters ({KEY_LEN} bytes)",
                KEY_LEN * 2
            ))
        };
        let bytes = hex::decode(s.trim()).map_err(|_| bad())?;
        Ok(ChannelKey(bytes.try_into().map_err(|_| bad())?))
    }

    pub fn bytes(&self) -> &[u8] {
        &self.0
    }
}

impl fmt::Debug for ChannelKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ChannelKey(***)")
    }
}

#[derive(Debug, Clone)]
pub struct CliConfig {
    pub network: NetworkId,
    pub peers: Vec<String>,
    pub rpc: Option<RpcEndpoint>,
    pub explorer_base: Option<String>,
    pub key: Option<ChannelKey>,
    pub checkpoint_path: PathBuf,
    pub min_confirmations: u32,
    pub quorum: Quorum,
}

impl CliConfig {
    pub fn resolve(
        args: &GlobalArgs,
        env: &dyn Fn(&str) -> Option<String>,
    ) -> Result<Self, CliError> {
        let file = match &args.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let network = match &args.network {
            Some(n) => n.parse().map_err(|e| CliError::Config(format!("{e}")))?,
            None => file.network.unwrap_or(NetworkId::Testnet3),
        };
        let peers = if args.peers.is_empty() {
            file.peers
        } else {
            args.peers.clone()
        };
        let peers = peers
            .iter()
            .map(|p| with_default_port(p, network))
            .collect();

        let key_hex = args
            .key_hex
            .clone()
            .or_else(|| env(ENV_KEY))
            .or(file.key_hex);
        let key = key_hex.as_deref().map(ChannelKey::from_hex).transpose()?;

        let rpc = match args.rpc_url.clone().or(file.rpc_url) {
            Some(url) => {
                let user = args
                    .rpc_user
                    .clone()
                    .or_else(|| env(ENV_RPC_USER))
                    .or(file.rpc_user)
                    .unwrap_or_default();
                let password = env(ENV_RPC_PASSWORD)
                    .or(file.rpc_password)
                    .unwrap_or_default();
                let wallet = args.rpc_wallet.clone().or(file.rpc_wallet);
                Some(
                    RpcEndpoint::new(&url, &user, Secret::new(password), wallet)
                        .map_err(|e| CliError::Config(e.to_string()))?,
                )
            }
            None => None,
        };

        let quorum = args
            .quorum
            .or(file.quorum)
            .unwrap_or(Quorum::default().fraction());
        let quorum = Quorum::new(quorum)
            .ok_or_else(|| CliError::Config(format!("quorum must be in [0, 1), got {quorum}")))?;
        let checkpoint_path = args
            .checkpoint
            .clone()
            .or(file.checkpoint)
            .unwrap_or_else(|| PathBuf::from(format!("oprv-checkpoint-{}.json", network.name())));

        Ok(CliConfig {
            network,
            peers,
            rpc,
            explorer_base: args.explorer.clone().or(file.explorer),
            key,
            checkpoint_path,
            min_confirmations: args
                .min_confirmations
                .or(file.min_confirmations)
                .unwrap_or_else(|| network.default_min_confirmations()),
            quorum,
        })
    }

    pub fn key_bytes(&self) -> Option<&[u8]> {
        self.key.as_ref().map(ChannelKey::bytes)
    }
}

fn with_default_port(peer: &str, network: NetworkId) -> String {
    let has_port = match peer.rsplit_once(':') {
        Some((host, port)) => {
            port.parse::<u16>().is_ok() && (!host.contains(':') || host.ends_with(']'))
        }
        None => false,
    };
    if has_port {
        peer.to_string()
    } else if peer.contains(':') && !peer.starts_with('[') {
        format!("[{peer}]:{}", network.default_port())
    } else {
        format!("{peer}:{}", network.default_port())
    }
}
