//! Reading a transaction from a block explorer's JSON API. This trusts a
//! single centralised server and is only a fallback to the P2P path.

use std::time::Duration;

use serde::Serialize;
use serde_json::Value;

use crate::wire::{op_return_data, Hash256};

pub const DEFAULT_EXPLORER_BASE: &str = "http://api.blockcypher.com/v1/btc/test3/txs/";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExplorerOutput {
    pub script_hex: String,
    /// OP_RETURN data, when the output carries any.
    pub data: Option<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExplorerError {
    #[error("explorer returned HTTP {0}")]
    Http(u16),
    #[error("transaction not found")]
    TxNotFound,
    #[error("unexpected explorer response: {0}")]
    SchemaMismatch(String),
    #[error("explorer unreachable: {0}")]
    Unreachable(String),
}

/// GET `base_url ‖ txid` and return each output's script and data.
pub fn explorer_fetch_tx(
    base_url: &str,
    txid: &Hash256,
) -> Result<Vec<ExplorerOutput>, ExplorerError> {
    let url = format!("{base_url}{txid}");
    let agent = ureq::AgentBuilder::new()
        .timeout(Duration::from_secs(30))
        .build();
    let body: Value = match agent.get(&url).call() {
        Ok(r) => r
            .into_json()
            .map_err(|e| ExplorerError::SchemaMismatch(e.to_string()))?,
        Err(ureq::Error::Status(404, _)) => return Err(ExplorerError::TxNotFound),
        Err(ureq::Error::Status(code, _)) => return Err(ExplorerError::Http(code)),
        Err(ureq::Error::Transport(t)) => {
            return Err(ExplorerError::Unreachable(t.kind().to_string()))
        }
    };
    parse_explorer_tx(&body)
}

/// Decode an explorer transaction document. Data is taken from the script
/// when it parses, since `data_string` is lossy for binary payloads;
/// `data_hex` and then `data_string` are fallbacks.
pub fn parse_explorer_tx(body: &Value) -> Result<Vec<ExplorerOutput>, ExplorerError> {
    let outputs = body
        .get("outputs")
        .and_then(Value::as_array)
        .ok_or_else(|| ExplorerError::SchemaMismatch("missing \"outputs\" array".into()))?;
    outputs
        .iter()
        .enumerate()
        .map(|(i, o)| {
            if !o.is_object() {
                return Err(ExplorerError::SchemaMismatch(format!(
                    "output {i} is not an object"
                )));
            }
            let script_hex = o
                .get("script")
                .and_then(Value::as_str)
                .unwrap_or_default()
                .to_string();
            let from_script = hex::decode(&script_hex)
                .ok()
                .and_then(|s| op_return_data(&s))
                .and_then(Result::ok);
            let data = from_script
                .or_else(|| {
                    o.get("data_hex")
                        .and_then(Value::as_str)
                        .and_then(|h| hex::decode(h).ok())
                })
                .or_else(|| {
                    o.get("data_string")
                        .and_then(Value::as_str)
                        .map(|s| s.as_bytes().to_vec())
                });
            Ok(ExplorerOutput { script_hex, data })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn prefers_script_over_data_string() {
        let body = json!({"outputs": [
            {"value": 0, "script": "6a0b52560100040a000067270f", "script_type": "null-data", "data_string": "RV\u{1}\u{0}"},
            {"value": 1000, "script": "0014aabb"},
            {"value": 0, "script_type": "null-data", "data_string": "10.0.0.103:9999"}
        ]});
        let outs = parse_explorer_tx(&body).unwrap();
        assert_eq!(
            outs[0].data.as_deref(),
            Some(&hex::decode("52560100040a000067270f").unwrap()[..])
        );
        assert_eq!(outs[1].data, None);
        assert_eq!(outs[2].data.as_deref(), Some(&b"10.0.0.103:9999"[..]));
        assert!(matches!(
            parse_explorer_tx(&json!({"hash": "x"})),
            Err(ExplorerError::SchemaMismatch(_))
        ));
    }
}
