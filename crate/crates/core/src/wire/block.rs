//! Blocks, headers and merkle roots.

use serde::Serialize;

use super::codec::{write_varint, Reader};
use super::hash::{sha256d, Hash256};
use super::tx::Transaction;
use super::DecodeError;

pub const HEADER_SIZE: usize = 80;

const MAX_BLOCK_TXS: u64 = 1_000_000;

/// Script prefix of the segwit witness commitment output in a coinbase.
pub const WITNESS_COMMITMENT_PREFIX: [u8; 6] = [0x6a, 0x24, 0xaa, 0x21, 0xa9, 0xed];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockHeader {
    pub version: i32,
    pub prev_block_hash: Hash256,
    pub merkle_root: Hash256,
    pub time: u32,
    pub bits: u32,
    pub nonce: u32,
}

impl BlockHeader {
    pub fn encode(&self) -> [u8; HEADER_SIZE] {
        let mut out = [0u8; HEADER_SIZE];
        out[..4].copy_from_slice(&self.version.to_le_bytes());
        out[4..36].copy_from_slice(self.prev_block_hash.as_bytes());
        out[36..68].copy_from_slice(self.merkle_root.as_bytes());
        out[68..72].copy_from_slice(&self.time.to_le_bytes());
        out[72..76].copy_from_slice(&self.bits.to_le_bytes());
        out[76..].copy_from_slice(&self.nonce.to_le_bytes());
        out
    }

    pub(crate) fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(BlockHeader {
            version: r.i32_le()?,
            prev_block_hash: Hash256(r.array()?),
            merkle_root: Hash256(r.array()?),
            time: r.u32_le()?,
            bits: r.u32_le()?,
            nonce: r.u32_le()?,
        })
    }

    pub fn block_hash(&self) -> Hash256 {
        sha256d(&self.encode())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub header: BlockHeader,
    pub transactions: Vec<Transaction>,
}

/// Why a block failed its self-consistency checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, thiserror::Error)]
pub enum IntegrityFault {
    #[error("header hash differs from the requested hash")]
    HashMismatch,
    #[error("merkle root does not match the transactions")]
    BadMerkle,
    #[error("witness commitment missing or wrong")]
    BadWitnessCommitment,
}

impl Block {
    pub fn block_hash(&self) -> Hash256 {
        self.header.block_hash()
    }

    pub fn txids(&self) -> Vec<Hash256> {
        self.transactions.iter().map(Transaction::txid).collect()
    }

    pub fn compute_merkle_root(&self) -> Hash256 {
        merkle_root(&self.txids())
    }

    /// Full serialization, witnesses included.
    pub fn encode(&self) -> Vec<u8> {
        self.encode_with(true)
    }

    /// Serialization with every transaction witness-stripped, as served for
    /// a plain `MSG_BLOCK` request.
    pub fn encode_stripped(&self) -> Vec<u8> {
        self.encode_with(false)
    }

    fn encode_with(&self, witness: bool) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_SIZE + 256 * self.transactions.len());
        out.extend_from_slice(&self.header.encode());
        write_varint(&mut out, self.transactions.len() as u64);
        for tx in &self.transactions {
            tx.encode_into(&mut out, witness && tx.has_witness());
        }
        out
    }

    /// Witness-stripped copy of this block.
    pub fn stripped(&self) -> Block {
        let mut b = self.clone();
        for tx in &mut b.transactions {
            for input in &mut tx.inputs {
                input.witness.clear();
            }
        }
        b
    }

    /// Check that the header hashes to `expected`, that the merkle root
    /// commits to the transactions, and that any witness data is committed
    /// to by the coinbase.
    pub fn check_integrity(&self, expected: &Hash256) -> Result<(), IntegrityFault> {
        if self.block_hash() != *expected {
            return Err(IntegrityFault::HashMismatch);
        }
        if self.transactions.is_empty() || self.compute_merkle_root() != self.header.merkle_root {
            return Err(IntegrityFault::BadMerkle);
        }
        if self.transactions.iter().any(Transaction::has_witness) {
            let coinbase = &self.transactions[0];
            let reserved = match coinbase.inputs.first().map(|i| i.witness.as_slice()) {
                Some([item]) if item.len() == 32 => item.clone(),
                _ => return Err(IntegrityFault::BadWitnessCommitment),
            };
            let committed = coinbase
                .outputs
                .iter()
                .rev()
                .find(|o| {
                    o.script_pubkey.len() >= 38
                        && o.script_pubkey.starts_with(&WITNESS_COMMITMENT_PREFIX)
                })
                .ok_or(IntegrityFault::BadWitnessCommitment)?;
            let expected = witness_commitment(&self.transactions, &reserved);
            if committed.script_pubkey[6..38] != expected.0 {
                return Err(IntegrityFault::BadWitnessCommitment);
            }
        }
        Ok(())
    }
}

/// `sha256d(witness_merkle_root || reserved)`, with the coinbase wtxid taken as zero.
pub fn witness_commitment(txs: &[Transaction], reserved: &[u8]) -> Hash256 {
    let wtxids: Vec<Hash256> = txs
        .iter()
        .enumerate()
        .map(|(i, tx)| if i == 0 { Hash256::ZERO } else { tx.wtxid() })
        .collect();
    let root = merkle_root(&wtxids);
    let mut buf = Vec::with_capacity(64);
    buf.extend_from_slice(root.as_bytes());
    buf.extend_from_slice(reserved);
    sha256d(&buf)
}

/// Merkle root over hashes in wire order; an odd node at any level is paired
/// with itself. Empty input yields the zero hash.
pub fn merkle_root(hashes: &[Hash256]) -> Hash256 {
    if hashes.is_empty() {
        return Hash256::ZERO;
    }
    let mut level: Vec<Hash256> = hashes.to_vec();
    while level.len() > 1 {
        level = level
            .chunks(2)
            .map(|pair| {
                let right = pair.get(1).unwrap_or(&pair[0]);
                let mut buf = [0u8; 64];
                buf[..32].copy_from_slice(pair[0].as_bytes());
                buf[32..].copy_from_slice(right.as_bytes());
                sha256d(&buf)
            })
            .collect();
    }
    level[0]
}

/// Parse a `block` message payload.
pub fn decode_block(payload: &[u8]) -> Result<Block, DecodeError> {
    let mut r = Reader::new(payload);
    let header = BlockHeader::decode_from(&mut r)?;
    let declared = r.count(MAX_BLOCK_TXS)?;
    let mut transactions = Vec::with_capacity(declared.min(4096));
    for _ in 0..declared {
        if r.is_empty() {
            return Err(DecodeError::TxCountMismatch {
                declared: declared as u64,
                parsed: transactions.len() as u64,
            });
        }
        transactions.push(Transaction::decode_from(&mut r)?);
    }
    if !r.is_empty() {
        // Whole extra transactions mean the count was understated.
        let mut extra = 0u64;
        while !r.is_empty() {
            match Transaction::decode_from(&mut r) {
                Ok(_) => extra += 1,
                Err(_) => return Err(DecodeError::TrailingBytes(r.remaining())),
            }
        }
        return Err(DecodeError::TxCountMismatch {
            declared: declared as u64,
            parsed: declared as u64 + extra,
        });
    }
    Ok(Block {
        header,
        transactions,
    })
}
