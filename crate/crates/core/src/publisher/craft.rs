//! listunspent → createrawtransaction → signrawtransactionwithwallet →
//! sendrawtransaction, with a local check of what the node built.

use serde::Serialize;
use serde_json::{json, Value};

use super::rpc::RpcClient;
use super::PublishError;
use crate::wire::{
    decode_transaction, op_return_data, Hash256, NetworkId, Transaction, MAX_OP_RETURN_DATA,
};

pub const SATS_PER_BTC: u64 = 100_000_000;
/// vsize of a one-input (P2WPKH), two-output transaction with a full
/// 80-byte data output. Fixed so fees are predictable.
pub const ESTIMATED_VSIZE: u64 = 201;
pub const MIN_FEE_SATS: u64 = 500;
/// Change below this would be non-standard dust.
pub const DUST_LIMIT_SATS: u64 = 546;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Utxo {
    pub txid: Hash256,
    pub vout: u32,
    pub amount_sats: u64,
    pub confirmations: u32,
}

impl Utxo {
    pub fn amount_btc(&self) -> String {
        format_btc(self.amount_sats)
    }
}

/// Fee rate in satoshis per virtual byte.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeeRate(pub u64);

impl Default for FeeRate {
    fn default() -> Self {
        FeeRate(2)
    }
}

impl FeeRate {
    pub fn fee(self) -> u64 {
        self.0.saturating_mul(ESTIMATED_VSIZE).max(MIN_FEE_SATS)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PublishReceipt {
    pub txid: Hash256,
    pub fee_paid: u64,
    pub op_return_hex: String,
    pub change_address: String,
    pub spent: Utxo,
}

/// `12345` → `"0.00012345"`.
pub fn format_btc(sats: u64) -> String {
    format!("{}.{:08}", sats / SATS_PER_BTC, sats % SATS_PER_BTC)
}

/// Parse a JSON amount (number or string) in BTC into satoshis.
pub fn parse_btc(v: &Value) -> Option<u64> {
    let s = match v {
        Value::Number(n) => n.to_string(),
        Value::String(s) => s.clone(),
        _ => return None,
    };
    let (whole, frac) = s.split_once('.').unwrap_or((&s, ""));
    if whole.is_empty() && frac.is_empty() {
        return None;
    }
    if frac.len() > 8
        || !whole
            .bytes()
            .chain(frac.bytes())
            .all(|b| b.is_ascii_digit())
    {
        // Floats printed in exponent form, or with excess precision.
        let f: f64 = s.parse().ok()?;
        return (f >= 0.0 && f.is_finite()).then(|| (f * SATS_PER_BTC as f64).round() as u64);
    }
    let whole: u64 = if whole.is_empty() {
        0
    } else {
        whole.parse().ok()?
    };
    let frac: u64 = format!("{frac:0<8}").parse().ok()?;
    whole.checked_mul(SATS_PER_BTC)?.checked_add(frac)
}

/// The hex the node expects as a `"data"` output value.
pub fn build_op_return_output(data: &[u8]) -> Result<String, PublishError> {
    if data.is_empty() {
        return Err(PublishError::EmptyPayload);
    }
    if data.len() > MAX_OP_RETURN_DATA {
        return Err(PublishError::PayloadTooLarge(data.len()));
    }
    Ok(hex::encode(data))
}

/// The chain the node reports through `getblockchaininfo`. `None` for a
/// chain name this crate has no network for (signet, for instance).
pub fn node_network(rpc: &RpcClient) -> Result<Option<NetworkId>, PublishError> {
    let info = rpc.call("getblockchaininfo", json!([]))?;
    let chain = info
        .get("chain")
        .and_then(Value::as_str)
        .ok_or_else(|| PublishError::InvalidResponse("getblockchaininfo: no chain".into()))?;
    Ok(match chain {
        "main" => Some(NetworkId::Mainnet),
        "test" => Some(NetworkId::Testnet3),
        "regtest" => Some(NetworkId::Regtest),
        _ => None,
    })
}

/// Spendable outputs of the wallet, largest first.
pub fn list_unspent(rpc: &RpcClient) -> Result<Vec<Utxo>, PublishError> {
    let result = rpc.call("listunspent", json!([]))?;
    let entries = result
        .as_array()
        .ok_or_else(|| PublishError::InvalidResponse("listunspent: not an array".into()))?;
    let mut out = Vec::with_capacity(entries.len());
    for e in entries {
        if e.get("spendable").and_then(Value::as_bool) == Some(false) {
            continue;
        }
        let bad = |field: &str| {
            PublishError::InvalidResponse(format!("listunspent entry without valid {field}"))
        };
        let txid = e
            .get("txid")
            .and_then(Value::as_str)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("txid"))?;
        let vout = e
            .get("vout")
            .and_then(Value::as_u64)
            .and_then(|v| u32::try_from(v).ok())
            .ok_or_else(|| bad("vout"))?;
        let amount_sats = e
            .get("amount")
            .and_then(parse_btc)
            .ok_or_else(|| bad("amount"))?;
        let confirmations = e
            .get("confirmations")
            .and_then(Value::as_u64)
            .unwrap_or(0)
            .min(u32::MAX as u64) as u32;
        if amount_sats > 0 {
            out.push(Utxo {
                txid,
                vout,
                amount_sats,
                confirmations,
            });
        }
    }
    out.sort_by(|a, b| {
        b.amount_sats
            .cmp(&a.amount_sats)
            .then(a.txid.as_bytes().cmp(b.txid.as_bytes()))
    });
    Ok(out)
}

/// Smallest UTXO that pays `fee` and leaves non-dust change.
pub fn select_utxo(utxos: &[Utxo], fee: u64) -> Result<&Utxo, PublishError> {
    let needed = fee + DUST_LIMIT_SATS;
    utxos
        .iter()
        .filter(|u| u.amount_sats >= needed)
        .min_by_key(|u| u.amount_sats)
        .ok_or(PublishError::InsufficientFunds {
            needed,
            largest: utxos.iter().map(|u| u.amount_sats).max().unwrap_or(0),
        })
}

/// Check the node's transaction against what we asked for: the one chosen
/// input, exactly one zero-value data output carrying `data`, and
/// inputs = outputs + fee.
pub fn verify_unsigned(
    tx: &Transaction,
    utxo: &Utxo,
    data: &[u8],
    fee: u64,
) -> Result<(), PublishError> {
    let mismatch = |m: &str| Err(PublishError::PayloadMismatch(m.to_string()));
    if tx.inputs.len() != 1
        || tx.inputs[0].previous_output.txid != utxo.txid
        || tx.inputs[0].previous_output.vout != utxo.vout
    {
        return mismatch("input is not the selected outpoint");
    }
    let data_outputs: Vec<_> = tx
        .outputs
        .iter()
        .filter_map(|o| op_return_data(&o.script_pubkey).map(|d| (o.value, d)))
        .collect();
    match data_outputs.as_slice() {
        [(0, Ok(d))] if d == data => {}
        [(0, Ok(_))] => return mismatch("data output carries different bytes"),
        [_] => return mismatch("data output is malformed or carries value"),
        _ => return mismatch("expected exactly one data output"),
    }
    let total_out: u64 = tx.outputs.iter().map(|o| o.value).sum();
    if total_out.checked_add(fee) != Some(utxo.amount_sats) {
        return mismatch("outputs plus fee do not equal the input amount");
    }
    Ok(())
}

fn decode_hex_tx(hex_str: &str, what: &str) -> Result<Transaction, PublishError> {
    let bytes =
        hex::decode(hex_str).map_err(|e| PublishError::InvalidResponse(format!("{what}: {e}")))?;
    let (tx, used) = decode_transaction(&bytes)
        .map_err(|e| PublishError::InvalidResponse(format!("{what}: {e}")))?;
    if used != bytes.len() {
        return Err(PublishError::InvalidResponse(format!(
            "{what}: trailing bytes"
        )));
    }
    Ok(tx)
}

pub fn craft_and_send(
    rpc: &RpcClient,
    data: &[u8],
    fee_rate: FeeRate,
) -> Result<PublishReceipt, PublishError> {
    let data_hex = build_op_return_output(data)?;
    let fee = fee_rate.fee();
    let utxos = list_unspent(rpc)?;
    let utxo = select_utxo(&utxos, fee)?.clone();
    let change_address = rpc
        .call("getrawchangeaddress", json!([]))?
        .as_str()
        .ok_or_else(|| PublishError::InvalidResponse("getrawchangeaddress: not a string".into()))?
        .to_string();
    let change = utxo.amount_sats - fee;
    let unsigned_hex = rpc.call(
        "createrawtransaction",
        json!([
            [{"txid": utxo.txid.to_string(), "vout": utxo.vout}],
            [{"data": data_hex}, {change_address.clone(): format_btc(change)}],
        ]),
    )?;
    let unsigned_hex = unsigned_hex.as_str().ok_or_else(|| {
        PublishError::InvalidResponse("createrawtransaction: not a string".into())
    })?;
    let unsigned = decode_hex_tx(unsigned_hex, "createrawtransaction")?;
    verify_unsigned(&unsigned, &utxo, data, fee)?;

    let signed = match rpc.call_raw("signrawtransactionwithwallet", json!([unsigned_hex]))? {
        Ok(v) => v,
        Err(f) => return Err(PublishError::SignFailed(f.message)),
    };
    if signed.get("complete").and_then(Value::as_bool) != Some(true) {
        let reasons: Vec<&str> = signed
            .get("errors")
            .and_then(Value::as_array)
            .map(|errs| {
                errs.iter()
                    .filter_map(|e| e.get("error").and_then(Value::as_str))
                    .collect()
            })
            .unwrap_or_default();
        return Err(PublishError::SignFailed(if reasons.is_empty() {
            "incomplete signature".into()
        } else {
            reasons.join("; ")
        }));
    }
    let signed_hex = signed.get("hex").and_then(Value::as_str).ok_or_else(|| {
        PublishError::InvalidResponse("signrawtransactionwithwallet: no hex".into())
    })?;
    let signed_tx = decode_hex_tx(signed_hex, "signrawtransactionwithwallet")?;
    if signed_tx.outputs != unsigned.outputs || signed_tx.inputs.len() != 1 {
        return Err(PublishError::PayloadMismatch(
            "signing changed the transaction outputs".into(),
        ));
    }

    let txid = match rpc.call_raw("sendrawtransaction", json!([signed_hex]))? {
        Ok(v) => v,
        Err(f) => return Err(PublishError::BroadcastRejected(f.message)),
    };
    let txid: Hash256 = txid
        .as_str()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| PublishError::InvalidResponse("sendrawtransaction: not a txid".into()))?;
    if txid != signed_tx.txid() {
        return Err(PublishError::InvalidResponse(format!(
            "node acknowledged {txid}, expected {}",
            signed_tx.txid()
        )));
    }
    Ok(PublishReceipt {
        txid,
        fee_paid: fee,
        op_return_hex: data_hex,
        change_address,
        spent: utxo,
    })
}
