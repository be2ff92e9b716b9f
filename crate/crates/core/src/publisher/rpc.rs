//! Minimal JSON-RPC 1.0 client for a full node's wallet interface.

use std::fmt;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde_json::{json, Value};
use url::Url;

use super::PublishError;

/// A string that never appears in `Debug` or `Display` output.
#[derive(Clone, PartialEq, Eq, Default)]
pub struct Secret(String);

impl Secret {
    pub fn new(s: impl Into<String>) -> Self {
        Secret(s.into())
    }

    pub fn expose(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for Secret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Secret(***)")
    }
}

impl fmt::Display for Secret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("***")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RpcEndpoint {
    url: Url,
    pub username: String,
    pub password: Secret,
    pub wallet_name: Option<String>,
}

impl RpcEndpoint {
    /// Credentials embedded in the URL are moved out of it.
    pub fn new(
        url: &str,
        username: impl Into<String>,
        password: Secret,
        wallet_name: Option<String>,
    ) -> Result<Self, PublishError> {
        let mut url = Url::parse(url).map_err(|e| PublishError::InvalidUrl(e.to_string()))?;
        if !matches!(url.scheme(), "http" | "https") {
            return Err(PublishError::InvalidUrl(format!(
                "unsupported scheme {}",
                url.scheme()
            )));
        }
        let mut username = username.into();
        let mut password = password;
        if !url.username().is_empty() {
            if username.is_empty() {
                username = url.username().to_string();
            }
            if password.expose().is_empty() {
                password = Secret::new(url.password().unwrap_or_default());
            }
            let _ = url.set_username("");
            let _ = url.set_password(None);
        }
        Ok(RpcEndpoint {
            url,
            username,
            password,
            wallet_name,
        })
    }

    /// The URL without credentials.
    pub fn url(&self) -> &Url {
        &self.url
    }

    fn wallet_url(&self) -> String {
        let base = self.url.as_str().trim_end_matches('/');
        match &self.wallet_name {
            Some(w) => format!("{base}/wallet/{w}"),
            None => base.to_string(),
        }
    }

    fn auth_header(&self) -> String {
        let raw = format!("{}:{}", self.username, self.password.expose());
        format!("Basic {}", BASE64.encode(raw))
    }
}

/// Error object returned by the node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RpcFailure {
    pub code: i64,
    pub message: String,
}

pub const RPC_WALLET_NOT_FOUND: i64 = -18;
pub const RPC_WALLET_NOT_SPECIFIED: i64 = -19;

#[derive(Debug, Clone)]
pub struct RpcClient {
    endpoint: RpcEndpoint,
    agent: ureq::Agent,
}

impl RpcClient {
    pub fn new(endpoint: RpcEndpoint) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs(30))
            .build();
        RpcClient { endpoint, agent }
    }

    pub fn endpoint(&self) -> &RpcEndpoint {
        &self.endpoint
    }

    /// Invoke `method`. Node-reported errors come back as `Ok(Err(..))` so
    /// callers can map them per method; transport and auth problems are
    /// `Err`.
    pub fn call_raw(
        &self,
        method: &str,
        params: Value,
    ) -> Result<Result<Value, RpcFailure>, PublishError> {
        let body = json!({"jsonrpc": "1.0", "id": "oprv", "method": method, "params": params});
        let response = self
            .agent
            .post(&self.endpoint.wallet_url())
            .set("Authorization", &self.endpoint.auth_header())
            .set("Content-Type", "application/json")
            .send_json(body);
        let reply: Value = match response {
            Ok(r) => r
                .into_json()
                .map_err(|e| PublishError::InvalidResponse(e.to_string()))?,
            Err(ureq::Error::Status(401, _)) => return Err(PublishError::RpcAuthFailed),
            Err(ureq::Error::Status(code, r)) => match r.into_json::<Value>() {
                Ok(v) if v.get("error").is_some_and(|e| !e.is_null()) => v,
                _ => return Err(PublishError::Http(code)),
            },
            Err(ureq::Error::Transport(t)) => {
                return Err(PublishError::RpcUnreachable(t.kind().to_string()))
            }
        };
        match reply.get("error") {
            Some(err) if !err.is_null() => {
                let failure = RpcFailure {
                    code: err.get("code").and_then(Value::as_i64).unwrap_or(0),
                    message: err
                        .get("message")
                        .and_then(Value::as_str)
                        .unwrap_or_default()
                        .to_string(),
                };
                if matches!(
                    failure.code,
                    RPC_WALLET_NOT_FOUND | RPC_WALLET_NOT_SPECIFIED
                ) {
                    return Err(PublishError::WalletNotFound(failure.message));
                }
                Ok(Err(failure))
            }
            _ => Ok(Ok(reply.get("result").cloned().unwrap_or(Value::Null))),
        }
    }

    /// Invoke `method`, treating any node-reported error as fatal.
    pub fn call(&self, method: &str, params: Value) -> Result<Value, PublishError> {
        self.call_raw(method, params)?
            .map_err(|f| PublishError::Rpc {
                method: method.to_string(),
                code: f.code,
                message: f.message,
            })
    }
}
