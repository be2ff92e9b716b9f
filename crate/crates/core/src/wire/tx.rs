//! Transactions in legacy and extended (segwit) serialization.

use super::codec::{write_var_bytes, write_varint, Reader};
use super::hash::{sha256d, Hash256};
use super::DecodeError;

/// Upper bound on inputs/outputs/witness items accepted while decoding.
/// A 4 MB block cannot hold more than this many 9-byte outputs.
const MAX_VEC_LEN: u64 = 500_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct OutPoint {
    pub txid: Hash256,
    pub vout: u32,
}

impl OutPoint {
    pub const COINBASE: OutPoint = OutPoint {
        txid: Hash256::ZERO,
        vout: u32::MAX,
    };

    pub fn is_coinbase(&self) -> bool {
        *self == OutPoint::COINBASE
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TxIn {
    pub previous_output: OutPoint,
    pub script_sig: Vec<u8>,
    pub sequence: u32,
    /// Witness stack; never interpreted, only carried.
    pub witness: Vec<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TxOut {
    pub value: u64,
    pub script_pubkey: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transaction {
    pub version: i32,
    pub inputs: Vec<TxIn>,
    pub outputs: Vec<TxOut>,
    pub lock_time: u32,
}

impl Transaction {
    pub fn has_witness(&self) -> bool {
        self.inputs.iter().any(|i| !i.witness.is_empty())
    }

    pub fn is_coinbase(&self) -> bool {
        self.inputs.len() == 1 && self.inputs[0].previous_output.is_coinbase()
    }

    /// Serialization including witness data when present.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.encode_into(&mut out, self.has_witness());
        out
    }

    /// Witness-stripped serialization, the preimage of the txid.
    pub fn encode_legacy(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.encode_into(&mut out, false);
        out
    }

    pub(crate) fn encode_into(&self, out: &mut Vec<u8>, with_witness: bool) {
        out.extend_from_slice(&self.version.to_le_bytes());
        if with_witness {
            out.extend_from_slice(&[0x00, 0x01]);
        }
        write_varint(out, self.inputs.len() as u64);
        for input in &self.inputs {
            out.extend_from_slice(input.previous_output.txid.as_bytes());
            out.extend_from_slice(&input.previous_output.vout.to_le_bytes());
            write_var_bytes(out, &input.script_sig);
            out.extend_from_slice(&input.sequence.to_le_bytes());
        }
        write_varint(out, self.outputs.len() as u64);
        for output in &self.outputs {
            out.extend_from_slice(&output.value.to_le_bytes());
            write_var_bytes(out, &output.script_pubkey);
        }
        if with_witness {
            for input in &self.inputs {
                write_varint(out, input.witness.len() as u64);
                for item in &input.witness {
                    write_var_bytes(out, item);
                }
            }
        }
        out.extend_from_slice(&self.lock_time.to_le_bytes());
    }

    pub fn txid(&self) -> Hash256 {
        sha256d(&self.encode_legacy())
    }

    /// Hash over the full serialization; equals the txid for legacy transactions.
    pub fn wtxid(&self) -> Hash256 {
        sha256d(&self.encode())
    }

    pub(crate) fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let version = r.i32_le()?;
        let mut segwit = false;
        // A zero input count followed by flag 0x01 is the extended format marker.
        if r.rest().first() == Some(&0x00) && r.rest().get(1) == Some(&0x01) {
            r.take(2)?;
            segwit = true;
        }
        let n_in = r.count(MAX_VEC_LEN)?;
        let mut inputs = Vec::with_capacity(n_in.min(1024));
        for _ in 0..n_in {
            let txid = Hash256(r.array()?);
            let vout = r.u32_le()?;
            let script_sig = r.script()?;
            let sequence = r.u32_le()?;
            inputs.push(TxIn {
                previous_output: OutPoint { txid, vout },
                script_sig,
                sequence,
                witness: Vec::new(),
            });
        }
        let n_out = r.count(MAX_VEC_LEN)?;
        let mut outputs = Vec::with_capacity(n_out.min(1024));
        for _ in 0..n_out {
            let value = r.u64_le()?;
            let script_pubkey = r.script()?;
            outputs.push(TxOut {
                value,
                script_pubkey,
            });
        }
        if segwit {
            for input in inputs.iter_mut() {
                let n_items = r.count(MAX_VEC_LEN)?;
                let mut stack = Vec::with_capacity(n_items.min(64));
                for _ in 0..n_items {
                    stack.push(r.var_bytes()?);
                }
                input.witness = stack;
            }
            if inputs.iter().all(|i| i.witness.is_empty()) {
                return Err(DecodeError::SuperfluousWitness);
            }
        }
        let lock_time = r.u32_le()?;
        Ok(Transaction {
            version,
            inputs,
            outputs,
            lock_time,
        })
    }
}

/// Decode one transaction from the front of `bytes`, returning it with the
/// number of bytes consumed.
pub fn decode_transaction(bytes: &[u8]) -> Result<(Transaction, usize), DecodeError> {
    let mut r = Reader::new(bytes);
    let tx = Transaction::decode_from(&mut r)?;
    Ok((tx, r.position()))
}
