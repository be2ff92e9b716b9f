use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Which chain a session, checkpoint or scenario belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetworkId {
    Mainnet,
    #[serde(alias = "testnet")]
    Testnet3,
    Regtest,
    /// The in-repo mock full node. Shares the regtest magic so that a real
    /// node can never mistake it for a public network.
    Simnet,
}

pub const MAINNET_MAGIC: [u8; 4] = [0xf9, 0xbe, 0xb4, 0xd9];
pub const TESTNET3_MAGIC: [u8; 4] = [0x0b, 0x11, 0x09, 0x07];
pub const REGTEST_MAGIC: [u8; 4] = [0xfa, 0xbf, 0xb5, 0xda];

const KNOWN_MAGICS: [[u8; 4]; 3] = [MAINNET_MAGIC, TESTNET3_MAGIC, REGTEST_MAGIC];

impl NetworkId {
    pub fn magic(self) -> [u8; 4] {
        match self {
            NetworkId::Mainnet => MAINNET_MAGIC,
            NetworkId::Testnet3 => TESTNET3_MAGIC,
            NetworkId::Regtest | NetworkId::Simnet => REGTEST_MAGIC,
        }
    }

    pub fn default_port(self) -> u16 {
        match self {
            NetworkId::Mainnet => 8333,
            NetworkId::Testnet3 => 18333,
            NetworkId::Regtest | NetworkId::Simnet => 18444,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            NetworkId::Mainnet => "mainnet",
            NetworkId::Testnet3 => "testnet3",
            NetworkId::Regtest => "regtest",
            NetworkId::Simnet => "simnet",
        }
    }

    /// Default confirmation depth before a rendezvous payload is trusted.
    pub fn default_min_confirmations(self) -> u32 {
        match self {
            NetworkId::Regtest | NetworkId::Simnet => 1,
            NetworkId::Mainnet | NetworkId::Testnet3 => 3,
        }
    }

    /// A magic from some other network we know about.
    pub fn is_foreign_magic(self, magic: [u8; 4]) -> bool {
        magic != self.magic() && KNOWN_MAGICS.contains(&magic)
    }
}

impl fmt::Display for NetworkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown network {0:?} (expected mainnet, testnet3, regtest or simnet)")]
pub struct UnknownNetwork(pub String);

impl FromStr for NetworkId {
    type Err = UnknownNetwork;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mainnet" | "main" => Ok(NetworkId::Mainnet),
            "testnet3" | "testnet" | "test" => Ok(NetworkId::Testnet3),
            "regtest" => Ok(NetworkId::Regtest),
            "simnet" => Ok(NetworkId::Simnet),
            _ => Err(UnknownNetwork(s.to_string())),
        }
    }
}
