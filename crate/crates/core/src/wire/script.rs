//! OP_RETURN recognition on output scripts. Nothing else in a script is
//! interpreted.

use super::tx::Transaction;

pub const OP_RETURN: u8 = 0x6a;
pub const OP_PUSHDATA1: u8 = 0x4c;
/// Standardness limit on OP_RETURN data carried by one output.
pub const MAX_OP_RETURN_DATA: usize = 80;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpReturnOutput {
    pub vout: u32,
    pub data: Vec<u8>,
}

/// Result of scanning one transaction's outputs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OpReturnScan {
    pub outputs: Vec<OpReturnOutput>,
    /// Output indices whose script starts with OP_RETURN but whose push is
    /// not a recognised form.
    pub malformed: Vec<u32>,
}

impl OpReturnScan {
    pub fn payloads(&self) -> impl Iterator<Item = &[u8]> {
        self.outputs.iter().map(|o| o.data.as_slice())
    }
}

/// `OP_RETURN <push data>` using the smallest push form.
pub fn op_return_script(data: &[u8]) -> Vec<u8> {
    let mut s = Vec::with_capacity(data.len() + 3);
    s.push(OP_RETURN);
    match data.len() {
        0 => {}
        n @ 1..=0x4b => s.push(n as u8),
        n if n <= 0xff => {
            s.push(OP_PUSHDATA1);
            s.push(n as u8);
        }
        _ => panic!("OP_RETURN data longer than 255 bytes"),
    }
    s.extend_from_slice(data);
    s
}

/// Data carried by an OP_RETURN script, `None` when the script is not
/// OP_RETURN, `Some(Err(()))` when the push is malformed.
pub fn op_return_data(script: &[u8]) -> Option<Result<Vec<u8>, ()>> {
    let (&first, rest) = script.split_first()?;
    if first != OP_RETURN {
        return None;
    }
    let Some((&op, rest)) = rest.split_first() else {
        return Some(Ok(Vec::new()));
    };
    let (len, body) = match op {
        0x00 => (0usize, rest),
        0x01..=0x4b => (op as usize, rest),
        OP_PUSHDATA1 => match rest.split_first() {
            Some((&n, body)) => (n as usize, body),
            None => return Some(Err(())),
        },
        _ => return Some(Err(())),
    };
    if body.len() != len {
        return Some(Err(()));
    }
    Some(Ok(body.to_vec()))
}

pub fn extract_op_returns(tx: &Transaction) -> OpReturnScan {
    let mut scan = OpReturnScan::default();
    for (vout, out) in tx.outputs.iter().enumerate() {
        match op_return_data(&out.script_pubkey) {
            None => {}
            Some(Ok(data)) => scan.outputs.push(OpReturnOutput {
                vout: vout as u32,
                data,
            }),
            Some(Err(())) => scan.malformed.push(vout as u32),
        }
    }
    scan
}
