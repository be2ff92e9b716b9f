use std::fmt;
use std::net::{IpAddr, Ipv4Addr, Ipv6Addr, SocketAddr};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// An address a client should connect back to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "EndpointRepr", into = "EndpointRepr")]
pub struct Endpoint {
    ip: IpAddr,
    port: u16,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EndpointError {
    #[error("port must be non-zero")]
    ZeroPort,
    #[error("not an ip:port endpoint: {0}")]
    Syntax(String),
}

impl Endpoint {
    pub fn new(ip: IpAddr, port: u16) -> Result<Self, EndpointError> {
        if port == 0 {
            return Err(EndpointError::ZeroPort);
        }
        Ok(Endpoint { ip, port })
    }

    pub fn ip(&self) -> IpAddr {
        self.ip
    }

    pub fn port(&self) -> u16 {
        self.port
    }

    pub fn socket_addr(&self) -> SocketAddr {
        SocketAddr::new(self.ip, self.port)
    }

    /// `ipver ‖ addr ‖ port` with the port big-endian.
    pub fn encode_body(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(19);
        match self.ip {
            IpAddr::V4(v4) => {
                out.push(4);
                out.extend_from_slice(&v4.octets());
            }
            IpAddr::V6(v6) => {
                out.push(6);
                out.extend_from_slice(&v6.octets());
            }
        }
        out.extend_from_slice(&self.port.to_be_bytes());
        out
    }

    /// Inverse of [`Endpoint::encode_body`]; the length must match exactly.
    pub fn decode_body(body: &[u8]) -> Option<Self> {
        let (ip, rest) = match body.first()? {
            4 if body.len() == 7 => {
                let o: [u8; 4] = body[1..5].try_into().ok()?;
                (IpAddr::V4(Ipv4Addr::from(o)), &body[5..])
            }
            6 if body.len() == 19 => {
                let o: [u8; 16] = body[1..17].try_into().ok()?;
                (IpAddr::V6(Ipv6Addr::from(o)), &body[17..])
            }
            _ => return None,
        };
        Endpoint::new(ip, u16::from_be_bytes([rest[0], rest[1]])).ok()
    }
}

impl From<Endpoint> for SocketAddr {
    fn from(ep: Endpoint) -> Self {
        ep.socket_addr()
    }
}

impl TryFrom<SocketAddr> for Endpoint {
    type Error = EndpointError;

    fn try_from(sa: SocketAddr) -> Result<Self, Self::Error> {
        Endpoint::new(sa.ip(), sa.port())
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.socket_addr().fmt(f)
    }
}

impl FromStr for Endpoint {
    type Err = EndpointError;

    /// Accepts `a.b.c.d:port`, `[v6]:port` and an optional `tcp://` prefix.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let trimmed = s.trim();
        let bare = trimmed.strip_prefix("tcp://").unwrap_or(trimmed);
        let sa: SocketAddr = bare
            .parse()
            .map_err(|_| EndpointError::Syntax(s.to_string()))?;
        Endpoint::try_from(sa)
    }
}

#[derive(Serialize, Deserialize)]
struct EndpointRepr {
    ip: IpAddr,
    port: u16,
}

impl From<Endpoint> for EndpointRepr {
    fn from(ep: Endpoint) -> Self {
        EndpointRepr {
            ip: ep.ip,
            port: ep.port,
        }
    }
}

impl TryFrom<EndpointRepr> for Endpoint {
    type Error = EndpointError;

    fn try_from(r: EndpointRepr) -> Result<Self, Self::Error> {
        Endpoint::new(r.ip, r.port)
    }
}
