//! An HTTP stand-in for a full node's wallet RPC, and for a block
//! explorer, so the publish path runs without a real node.

use std::collections::HashSet;
use std::io;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde_json::{json, Value};

use crate::publisher::parse_btc;
use crate::wire::{
    decode_transaction, op_return_script, sha256, Hash256, OutPoint, Transaction, TxIn, TxOut,
};

type Handler = dyn Fn(&str, Option<&str>, &[u8]) -> (u16, String) + Send + Sync;

/// A small HTTP server on a background thread.
struct HttpServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl HttpServer {
    fn start(handler: Arc<Handler>) -> io::Result<Self> {
        let server = tiny_http::Server::http("127.0.0.1:0")
            .map_err(|e| io::Error::new(io::ErrorKind::Other, e.to_string()))?;
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| io::Error::new(io::ErrorKind::Other, "not an ip listener"))?;
        let stop = Arc::new(AtomicBool::new(false));
        let flag = Arc::clone(&stop);
        let thread = thread::spawn(move || {
            while !flag.load(Ordering::SeqCst) {
                let mut req = match server.recv_timeout(Duration::from_millis(50)) {
                    Ok(Some(r)) => r,
                    Ok(None) => continue,
                    Err(_) => return,
                };
                let auth = req
                    .headers()
                    .iter()
                    .find(|h| h.field.equiv("Authorization"))
                    .map(|h| h.value.as_str().to_string());
                let mut body = Vec::new();
                let _ = req.as_reader().read_to_end(&mut body);
                let (status, text) = handler(req.url(), auth.as_deref(), &body);
                let header =
                    tiny_http::Header::from_bytes(&b"Content-Type"[..], &b"application/json"[..])
                        .unwrap();
                let _ = req.respond(
                    tiny_http::Response::from_string(text)
                        .with_status_code(status)
                        .with_header(header),
                );
            }
        });
        Ok(HttpServer {
            addr,
            stop,
            thread: Some(thread),
        })
    }
}

impl Drop for HttpServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MockUtxo {
    pub txid: Hash256,
    pub vout: u32,
    pub sats: u64,
    pub confirmations: u32,
}

#[derive(Debug, Clone)]
pub struct MockRpcConfig {
    pub username: String,
    pub password: String,
    /// When set, wallet calls must go to `/wallet/<name>`.
    pub wallet: Option<String>,
    pub utxos: Vec<MockUtxo>,
    /// Keep listing outputs after they are spent.
    pub stale_listunspent: bool,
    /// Spend the input behind the client's back right after signing.
    pub spend_after_sign: bool,
    /// Reject every broadcast with this reason.
    pub reject_broadcast: Option<String>,
    /// Flip a bit in the data output built by createrawtransaction.
    pub tamper_created_data: bool,
    /// Reported by getblockchaininfo.
    pub chain: String,
}

impl Default for MockRpcConfig {
    fn default() -> Self {
        MockRpcConfig {
            username: "user".into(),
            password: "pass".into(),
            wallet: None,
            utxos: Vec::new(),
            stale_listunspent: false,
            spend_after_sign: false,
            reject_broadcast: None,
            tamper_created_data: false,
            chain: "regtest".into(),
        }
    }
}

impl MockRpcConfig {
    /// One mature 50 BTC output, as a regtest wallet has after mining.
    pub fn funded() -> Self {
        MockRpcConfig {
            utxos: vec![MockUtxo {
                txid: sha256_hash(b"mock-coinbase"),
                vout: 0,
                sats: 50 * 100_000_000,
                confirmations: 101,
            }],
            ..Default::default()
        }
    }
}

fn sha256_hash(data: &[u8]) -> Hash256 {
    Hash256::from_wire(sha256(data))
}

#[derive(Default)]
struct WalletState {
    unspent: Vec<MockUtxo>,
    spent: HashSet<(Hash256, u32)>,
    mempool: Vec<Transaction>,
    change_counter: u32,
    calls: Vec<String>,
}

/// Mock wallet node serving getblockchaininfo, listunspent (confirmed outputs only, like the
/// real default of `minconf=1`), getrawchangeaddress,
/// createrawtransaction, signrawtransactionwithwallet and
/// sendrawtransaction.
pub struct MockRpcNode {
    http: HttpServer,
    state: Arc<Mutex<WalletState>>,
}

struct RpcFail(u16, i64, String);

impl MockRpcNode {
    pub fn start(config: MockRpcConfig) -> io::Result<Self> {
        let state = Arc::new(Mutex::new(WalletState {
            unspent: config.utxos.clone(),
            ..Default::default()
        }));
        let st = Arc::clone(&state);
        let expected_auth = format!(
            "Basic {}",
            BASE64.encode(format!("{}:{}", config.username, config.password))
        );
        let handler = move |url: &str, auth: Option<&str>, body: &[u8]| -> (u16, String) {
            if auth != Some(expected_auth.as_str()) {
                return (401, String::new());
            }
            let req: Value = match serde_json::from_slice(body) {
                Ok(v) => v,
                Err(_) => return (500, error_body(&Value::Null, -32700, "Parse error")),
            };
            let id = req.get("id").cloned().unwrap_or(Value::Null);
            let method = req
                .get("method")
                .and_then(Value::as_str)
                .unwrap_or_default()
                .to_string();
            let params = req.get("params").cloned().unwrap_or_else(|| json!([]));
            st.lock().unwrap().calls.push(method.clone());
            let wallet_ok = match (url.strip_prefix("/wallet/"), &config.wallet) {
                (Some(name), Some(w)) => name.trim_end_matches('/') == w,
                (Some(_), None) => false,
                (None, _) => true,
            };
            if !wallet_ok {
                return (
                    500,
                    error_body(&id, -18, "Requested wallet does not exist or is not loaded"),
                );
            }
            match dispatch(&config, &st, &method, &params) {
                Ok(result) => (
                    200,
                    json!({"result": result, "error": null, "id": id}).to_string(),
                ),
                Err(RpcFail(status, code, message)) => (status, error_body(&id, code, &message)),
            }
        };
        Ok(MockRpcNode {
            http: HttpServer::start(Arc::new(handler))?,
            state,
        })
    }

    pub fn url(&self) -> String {
        format!("http://{}/", self.http.addr)
    }

    /// Methods called so far, in order.
    pub fn calls(&self) -> Vec<String> {
        self.state.lock().unwrap().calls.clone()
    }

    pub fn mempool(&self) -> Vec<Transaction> {
        self.state.lock().unwrap().mempool.clone()
    }

    /// Drain the mempool, as if its transactions were mined. Every wallet
    /// output gains a confirmation.
    pub fn take_mempool(&self) -> Vec<Transaction> {
        let mut s = self.state.lock().unwrap();
        for u in &mut s.unspent {
            u.confirmations += 1;
        }
        std::mem::take(&mut s.mempool)
    }

    /// Outputs the wallet currently considers unspent.
    pub fn unspent(&self) -> Vec<MockUtxo> {
        let s = self.state.lock().unwrap();
        s.unspent
            .iter()
            .filter(|u| !s.spent.contains(&(u.txid, u.vout)))
            .cloned()
            .collect()
    }
}

fn error_body(id: &Value, code: i64, message: &str) -> String {
    json!({"result": null, "error": {"code": code, "message": message}, "id": id}).to_string()
}

fn change_script(address: &str) -> Vec<u8> {
    let mut s = vec![0x00, 0x14];
    s.extend_from_slice(&sha256(address.as_bytes())[..20]);
    s
}

fn invalid(msg: impl Into<String>) -> RpcFail {
    RpcFail(500, -8, msg.into())
}

fn param(params: &Value, i: usize) -> Result<&Value, RpcFail> {
    params
        .get(i)
        .ok_or_else(|| invalid(format!("missing parameter {i}")))
}

fn decode_hex_tx(v: &Value) -> Result<Transaction, RpcFail> {
    let bytes = v
        .as_str()
        .and_then(|s| hex::decode(s).ok())
        .ok_or_else(|| RpcFail(500, -22, "TX decode failed".into()))?;
    match decode_transaction(&bytes) {
        Ok((tx, n)) if n == bytes.len() => Ok(tx),
        _ => Err(RpcFail(500, -22, "TX decode failed".into())),
    }
}

fn dispatch(
    config: &MockRpcConfig,
    state: &Mutex<WalletState>,
    method: &str,
    params: &Value,
) -> Result<Value, RpcFail> {
    let mut s = state.lock().unwrap();
    match method {
        "getblockchaininfo" => Ok(json!({"chain": config.chain, "blocks": 0, "headers": 0})),
        "listunspent" => {
            let list: Vec<Value> = s
                .unspent
                .iter()
                .filter(|u| u.confirmations >= 1)
                .filter(|u| config.stale_listunspent || !s.spent.contains(&(u.txid, u.vout)))
                .map(|u| {
                    json!({
                        "txid": u.txid.to_string(),
                        "vout": u.vout,
                        "address": "bcrt1qmockwallet",
                        "amount": u.sats as f64 / 1e8,
                        "confirmations": u.confirmations,
                        "spendable": true,
                        "solvable": true,
                        "safe": true,
                    })
                })
                .collect();
            Ok(Value::Array(list))
        }
        "getrawchangeaddress" => {
            s.change_counter += 1;
            Ok(json!(format!("bcrt1qmockchange{}", s.change_counter)))
        }
        "createrawtransaction" => {
            let inputs = param(params, 0)?
                .as_array()
                .ok_or_else(|| invalid("inputs must be an array"))?;
            let mut tx = Transaction {
                version: 2,
                inputs: Vec::new(),
                outputs: Vec::new(),
                lock_time: 0,
            };
            for i in inputs {
                let txid = i
                    .get("txid")
                    .and_then(Value::as_str)
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| invalid("txid must be hexadecimal string"))?;
                let vout = i
                    .get("vout")
                    .and_then(Value::as_u64)
                    .ok_or_else(|| invalid("vout must be a number"))?
                    as u32;
                tx.inputs.push(TxIn {
                    previous_output: OutPoint { txid, vout },
                    script_sig: Vec::new(),
                    sequence: 0xffff_fffd,
                    witness: Vec::new(),
                });
            }
            let outputs = param(params, 1)?;
            let pairs: Vec<(String, Value)> = match outputs {
                Value::Array(items) => items
                    .iter()
                    .filter_map(Value::as_object)
                    .flat_map(|o| o.iter().map(|(k, v)| (k.clone(), v.clone())))
                    .collect(),
                Value::Object(o) => o.iter().map(|(k, v)| (k.clone(), v.clone())).collect(),
                _ => return Err(invalid("outputs must be an array or object")),
            };
            for (key, value) in pairs {
                if key == "data" {
                    let mut data = value
                        .as_str()
                        .and_then(|h| hex::decode(h).ok())
                        .ok_or_else(|| invalid("Data must be hexadecimal string"))?;
                    if config.tamper_created_data && !data.is_empty() {
                        data[0] ^= 0x01;
                    }
                    tx.outputs.push(TxOut {
                        value: 0,
                        script_pubkey: op_return_script(&data),
                    });
                } else {
                    let sats = parse_btc(&value)
                        .ok_or_else(|| RpcFail(500, -3, "Invalid amount".into()))?;
                    tx.outputs.push(TxOut {
                        value: sats,
                        script_pubkey: change_script(&key),
                    });
                }
            }
            Ok(json!(hex::encode(tx.encode())))
        }
        "signrawtransactionwithwallet" => {
            let mut tx = decode_hex_tx(param(params, 0)?)?;
            let mut errors = Vec::new();
            for input in &mut tx.inputs {
                let op = input.previous_output;
                let known = s
                    .unspent
                    .iter()
                    .any(|u| u.txid == op.txid && u.vout == op.vout);
                if known && !s.spent.contains(&(op.txid, op.vout)) {
                    let mut sig = vec![0x30; 71];
                    sig.push(0x01);
                    input.witness = vec![sig, vec![0x02; 33]];
                } else {
                    errors.push(json!({
                        "txid": op.txid.to_string(),
                        "vout": op.vout,
                        "witness": [],
                        "scriptSig": "",
                        "sequence": input.sequence,
                        "error": "Input not found or already spent",
                    }));
                }
            }
            if config.spend_after_sign {
                for input in &tx.inputs {
                    s.spent
                        .insert((input.previous_output.txid, input.previous_output.vout));
                }
            }
            let mut out = json!({"hex": hex::encode(tx.encode()), "complete": errors.is_empty()});
            if !errors.is_empty() {
                out["errors"] = Value::Array(errors);
            }
            Ok(out)
        }
        "sendrawtransaction" => {
            let tx = decode_hex_tx(param(params, 0)?)?;
            if let Some(reason) = &config.reject_broadcast {
                return Err(RpcFail(500, -26, reason.clone()));
            }
            for input in &tx.inputs {
                let op = input.previous_output;
                let known = s
                    .unspent
                    .iter()
                    .any(|u| u.txid == op.txid && u.vout == op.vout);
                if !known || s.spent.contains(&(op.txid, op.vout)) {
                    return Err(RpcFail(500, -25, "bad-txns-inputs-missingorspent".into()));
                }
            }
            for input in &tx.inputs {
                s.spent
                    .insert((input.previous_output.txid, input.previous_output.vout));
            }
            let txid = tx.txid();
            for (vout, o) in tx.outputs.iter().enumerate() {
                if o.value > 0 {
                    s.unspent.push(MockUtxo {
                        txid,
                        vout: vout as u32,
                        sats: o.value,
                        confirmations: 0,
                    });
                }
            }
            s.mempool.push(tx);
            Ok(json!(txid.to_string()))
        }
        other => Err(RpcFail(404, -32601, format!("Method not found: {other}"))),
    }
}

/// Serves canned explorer documents at `<base>/<txid>`.
pub struct MockExplorer {
    http: HttpServer,
}

impl MockExplorer {
    /// `routes` maps a txid to an HTTP status and body; anything else is 404.
    pub fn start(routes: Vec<(String, u16, String)>) -> io::Result<Self> {
        let handler = move |url: &str, _: Option<&str>, _: &[u8]| -> (u16, String) {
            let last = url.rsplit('/').next().unwrap_or_default();
            routes
                .iter()
                .find(|(txid, _, _)| txid == last)
                .map(|(_, status, body)| (*status, body.clone()))
                .unwrap_or((404, r#"{"error": "Transaction not found"}"#.into()))
        };
        Ok(MockExplorer {
            http: HttpServer::start(Arc::new(handler))?,
        })
    }

    /// Base URL ending in `/`, shaped like the public testnet path.
    pub fn base_url(&self) -> String {
        format!("http://{}/v1/btc/test3/txs/", self.http.addr)
    }
}
