//! Deterministic construction of test blocks and transactions.

use crate::wire::{
    op_return_script, sha256d, witness_commitment, Block, BlockHeader, Hash256, OutPoint,
    Transaction, TxIn, TxOut, WITNESS_COMMITMENT_PREFIX,
};

/// Regtest's minimum-difficulty target; no proof of work is performed.
pub const SIM_BITS: u32 = 0x207f_ffff;
const SIM_GENESIS_TIME: u32 = 1_700_000_000;
const SIM_BLOCK_INTERVAL: u32 = 600;
const SUBSIDY: u64 = 50 * 100_000_000;

/// Builds a linked chain of blocks with correct merkle roots.
#[derive(Debug, Clone)]
pub struct TestBlockBuilder {
    prev_hash: Hash256,
    next_height: u32,
    timestamp: u32,
}

impl Default for TestBlockBuilder {
    fn default() -> Self {
        TestBlockBuilder {
            prev_hash: Hash256::ZERO,
            next_height: 0,
            timestamp: SIM_GENESIS_TIME,
        }
    }
}

impl TestBlockBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn next_height(&self) -> u32 {
        self.next_height
    }

    pub fn tip_hash(&self) -> Hash256 {
        self.prev_hash
    }

    /// Prepend a coinbase to `txs` and seal the next block. Blocks that carry
    /// witness data get a witness commitment in the coinbase.
    pub fn build_block(&mut self, txs: Vec<Transaction>) -> Block {
        let height = self.next_height;
        let mut coinbase = coinbase_tx(height);
        let mut transactions = Vec::with_capacity(txs.len() + 1);
        transactions.push(coinbase.clone());
        transactions.extend(txs);
        if transactions.iter().any(Transaction::has_witness) {
            let reserved = [0u8; 32];
            let commitment = witness_commitment(&transactions, &reserved);
            let mut script = WITNESS_COMMITMENT_PREFIX.to_vec();
            script.extend_from_slice(commitment.as_bytes());
            coinbase.outputs.push(TxOut {
                value: 0,
                script_pubkey: script,
            });
            coinbase.inputs[0].witness = vec![reserved.to_vec()];
            transactions[0] = coinbase;
        }
        let txids: Vec<Hash256> = transactions.iter().map(Transaction::txid).collect();
        let header = BlockHeader {
            version: 0x2000_0000,
            prev_block_hash: self.prev_hash,
            merkle_root: crate::wire::merkle_root(&txids),
            time: self.timestamp,
            bits: SIM_BITS,
            nonce: 0,
        };
        let block = Block {
            header,
            transactions,
        };
        self.prev_hash = block.block_hash();
        self.next_height += 1;
        self.timestamp += SIM_BLOCK_INTERVAL;
        block
    }
}

fn coinbase_tx(height: u32) -> Transaction {
    // Height push keeps coinbase txids unique per block.
    let mut script_sig = vec![0x04];
    script_sig.extend_from_slice(&height.to_le_bytes());
    script_sig.extend_from_slice(b"\x06simnet");
    Transaction {
        version: 2,
        inputs: vec![TxIn {
            previous_output: OutPoint::COINBASE,
            script_sig,
            sequence: u32::MAX,
            witness: vec![],
        }],
        outputs: vec![TxOut {
            value: SUBSIDY,
            script_pubkey: vec![0x51],
        }],
        lock_time: 0,
    }
}

/// A one-input transaction whose only output is `script_pubkey`. The input
/// spends a made-up outpoint derived from `seed`.
pub fn tx_with_output(seed: &[u8], value: u64, script_pubkey: Vec<u8>) -> Transaction {
    Transaction {
        version: 2,
        inputs: vec![TxIn {
            previous_output: OutPoint {
                txid: sha256d(seed),
                vout: 0,
            },
            script_sig: vec![0x51],
            sequence: u32::MAX,
            witness: vec![],
        }],
        outputs: vec![TxOut {
            value,
            script_pubkey,
        }],
        lock_time: 0,
    }
}

/// A transaction carrying `data` in a zero-value OP_RETURN output.
pub fn op_return_tx(seed: &[u8], data: &[u8]) -> Transaction {
    tx_with_output(seed, 0, op_return_script(data))
}

/// Build a chain: a coinbase-only genesis followed by one block per entry.
pub fn build_chain(blocks: Vec<Vec<Transaction>>) -> Vec<Block> {
    let mut builder = TestBlockBuilder::new();
    let mut chain = vec![builder.build_block(vec![])];
    for txs in blocks {
        chain.push(builder.build_block(txs));
    }
    chain
}
