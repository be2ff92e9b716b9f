//! What a simulated node serves and how it misbehaves.

use std::net::SocketAddr;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::builder::{build_chain, op_return_tx, tx_with_output};
use crate::rendezvous::{encode_endpoint, Endpoint};
use crate::wire::{Block, NetAddress, NetworkId, Transaction, VersionPayload, PROTOCOL_VERSION};

/// Which inbound request a fault reacts to.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(from = "Option<String>", into = "Option<String>")]
pub enum RequestMatcher {
    #[default]
    Any,
    Command(String),
}

impl RequestMatcher {
    pub fn matches(&self, command: &str) -> bool {
        match self {
            RequestMatcher::Any => true,
            RequestMatcher::Command(c) => c == command,
        }
    }
}

impl From<Option<String>> for RequestMatcher {
    fn from(v: Option<String>) -> Self {
        match v {
            None => RequestMatcher::Any,
            Some(s) if s == "*" || s == "any" => RequestMatcher::Any,
            Some(s) => RequestMatcher::Command(s),
        }
    }
}

impl From<RequestMatcher> for Option<String> {
    fn from(m: RequestMatcher) -> Self {
        match m {
            RequestMatcher::Any => None,
            RequestMatcher::Command(c) => Some(c),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FaultKind {
    /// Answer `version` without the following `verack`.
    DropVerack,
    /// XOR 0x01 into byte `byte` of transaction `tx` of chain block `block`
    /// whenever that block is served.
    TamperTxByte {
        block: usize,
        tx: usize,
        byte: usize,
    },
    /// Frame replies with another network's magic.
    WrongMagic,
    /// Wait before replying.
    Stall { seconds: f64 },
    /// Cut this many bytes off the end of served block payloads. The frame
    /// itself stays valid.
    TruncateBlock { bytes: usize },
    /// Write these raw bytes ahead of the reply.
    SendGarbage {
        #[serde(with = "hex_bytes")]
        bytes: Vec<u8>,
    },
    /// Send `count` unsolicited messages (ping, unknown inv type, unknown
    /// command, in rotation) ahead of the reply.
    Noise { count: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fault {
    #[serde(flatten)]
    pub kind: FaultKind,
    #[serde(default)]
    pub applies_to: RequestMatcher,
}

impl Fault {
    pub fn any(kind: FaultKind) -> Self {
        Fault {
            kind,
            applies_to: RequestMatcher::Any,
        }
    }

    pub fn on(command: &str, kind: FaultKind) -> Self {
        Fault {
            kind,
            applies_to: RequestMatcher::Command(command.to_string()),
        }
    }
}

/// Immutable description of a simulated node.
#[derive(Debug, Clone, PartialEq)]
pub struct SimScript {
    pub network: NetworkId,
    /// `chain[0]` is genesis.
    pub chain: Vec<Block>,
    pub version_reply: VersionPayload,
    pub addr_reply: Vec<NetAddress>,
    pub faults: Vec<Fault>,
}

impl SimScript {
    /// A node on the simnet network serving `chain`, with no faults.
    pub fn new(chain: Vec<Block>) -> Self {
        let height = chain.len().saturating_sub(1) as i32;
        SimScript {
            network: NetworkId::Simnet,
            chain,
            version_reply: default_version(height, "/oprv-simnet:0.1/"),
            addr_reply: Vec::new(),
            faults: Vec::new(),
        }
    }

    pub fn with_faults(mut self, faults: Vec<Fault>) -> Self {
        self.faults = faults;
        self
    }

    pub fn tip_height(&self) -> u32 {
        self.chain.len().saturating_sub(1) as u32
    }

    /// Five blocks after genesis; block 3 carries a plain payload for
    /// `10.0.0.103:9999`.
    pub fn default_scenario() -> Self {
        let ep: Endpoint = "10.0.0.103:9999".parse().expect("literal endpoint");
        let payload = encode_endpoint(&ep, None)
            .expect("plain encoding")
            .remove(0);
        let mut blocks: Vec<Vec<Transaction>> = vec![Vec::new(); 5];
        blocks[2].push(op_return_tx(b"default-scenario", &payload));
        SimScript::new(build_chain(blocks))
    }

    pub fn from_scenario(s: &Scenario) -> Result<Self, ScenarioError> {
        let mut blocks = Vec::with_capacity(s.blocks.len());
        for (bi, b) in s.blocks.iter().enumerate() {
            let mut txs = Vec::with_capacity(b.txs.len());
            for (ti, t) in b.txs.iter().enumerate() {
                let seed = format!("scenario-{bi}-{ti}");
                let bad = |e: hex::FromHexError| ScenarioError::Hex {
                    block: bi,
                    tx: ti,
                    message: e.to_string(),
                };
                let tx = match t {
                    ScenarioTx::OpReturn { op_return_hex } => {
                        op_return_tx(seed.as_bytes(), &hex::decode(op_return_hex).map_err(bad)?)
                    }
                    ScenarioTx::Script { script_hex, value } => tx_with_output(
                        seed.as_bytes(),
                        *value,
                        hex::decode(script_hex).map_err(bad)?,
                    ),
                };
                txs.push(tx);
            }
            blocks.push(txs);
        }
        let mut script = SimScript::new(build_chain(blocks));
        script.network = s.network;
        script.faults = s.faults.clone();
        script.addr_reply = s.addrs.iter().map(|a| NetAddress::new(*a, 0)).collect();
        if let Some(ua) = &s.user_agent {
            script.version_reply.user_agent = ua.clone();
        }
        for f in &script.faults {
            if let FaultKind::TamperTxByte { block, tx, .. } = f.kind {
                if script
                    .chain
                    .get(block)
                    .and_then(|b| b.transactions.get(tx))
                    .is_none()
                {
                    return Err(ScenarioError::FaultTarget { block, tx });
                }
            }
        }
        Ok(script)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io(e.to_string()))?;
        let scenario: Scenario =
            serde_json::from_str(&text).map_err(|e| ScenarioError::Json(e.to_string()))?;
        Self::from_scenario(&scenario)
    }
}

fn default_version(start_height: i32, user_agent: &str) -> VersionPayload {
    VersionPayload {
        protocol_version: PROTOCOL_VERSION,
        services: 1,
        timestamp: 1_700_000_000,
        addr_recv: NetAddress::unspecified(),
        addr_from: NetAddress::unspecified(),
        nonce: 0x5eed_5eed_5eed_5eed,
        user_agent: user_agent.to_string(),
        start_height,
        relay: true,
    }
}

/// JSON scenario file. Block entries are the blocks after genesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default = "simnet")]
    pub network: NetworkId,
    pub blocks: Vec<ScenarioBlock>,
    #[serde(default)]
    pub faults: Vec<Fault>,
    #[serde(default)]
    pub addrs: Vec<SocketAddr>,
    #[serde(default)]
    pub user_agent: Option<String>,
}

fn simnet() -> NetworkId {
    NetworkId::Simnet
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioBlock {
    #[serde(default)]
    pub txs: Vec<ScenarioTx>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioTx {
    OpReturn {
        op_return_hex: String,
    },
    Script {
        script_hex: String,
        #[serde(default)]
        value: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read scenario: {0}")]
    Io(String),
    #[error("invalid scenario JSON: {0}")]
    Json(String),
    #[error("block {block} tx {tx}: bad hex: {message}")]
    Hex {
        block: usize,
        tx: usize,
        message: String,
    },
    #[error("fault targets missing block {block} tx {tx}")]
    FaultTarget { block: usize, tx: usize },
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s).map_err(serde::de::Error::custom)
    }
}
