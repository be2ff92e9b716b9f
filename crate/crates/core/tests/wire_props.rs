use oprv_core::wire::{
    decode_block, decode_transaction, decode_varint, encode_varint, frame_message, merkle_root,
    op_return_data, op_return_script, unframe_message, AddrEntry, FrameError, GetBlocks, Hash256,
    InvType, InventoryVector, NetAddress, NetworkId, OutPoint, Transaction, TxIn, TxOut,
    VersionPayload, WireMessage, HEADER_LEN, MAX_OP_RETURN_DATA,
};
use proptest::prelude::*;
use sha2::{Digest, Sha256};

/// Double SHA-256 straight from the `sha2` crate.
fn oracle_sha256d(data: &[u8]) -> [u8; 32] {
    Sha256::digest(Sha256::digest(data)).into()
}

/// Merkle root computed independently: pairwise hashing, last node
/// duplicated on odd levels.
fn oracle_merkle(leaves: &[[u8; 32]]) -> [u8; 32] {
    if leaves.is_empty() {
        return [0; 32];
    }
    let mut level = leaves.to_vec();
    while level.len() > 1 {
        if level.len() % 2 == 1 {
            level.push(*level.last().unwrap());
        }
        level = level
            .chunks(2)
            .map(|p| oracle_sha256d(&[p[0], p[1]].concat()))
            .collect();
    }
    level[0]
}

fn hash() -> impl Strategy<Value = Hash256> {
    any::<[u8; 32]>().prop_map(Hash256::from_wire)
}

fn net_addr() -> impl Strategy<Value = NetAddress> {
    (any::<u64>(), any::<[u8; 16]>(), any::<u16>()).prop_map(|(services, ip, port)| NetAddress {
        services,
        ip,
        port,
    })
}

fn inv_items() -> impl Strategy<Value = Vec<InventoryVector>> {
    let ty = prop_oneof![
        Just(InvType::Tx),
        Just(InvType::Block),
        Just(InvType::WitnessTx),
        Just(InvType::WitnessBlock),
        (5u32..0x4000_0000).prop_map(InvType::from_code),
    ];
    prop::collection::vec(
        (ty, hash()).prop_map(|(inv_type, hash)| InventoryVector { inv_type, hash }),
        0..40,
    )
}

fn transaction() -> impl Strategy<Value = Transaction> {
    let input = (
        hash(),
        any::<u32>(),
        prop::collection::vec(any::<u8>(), 0..120),
        any::<u32>(),
        prop::collection::vec(prop::collection::vec(any::<u8>(), 0..80), 0..4),
    )
        .prop_map(|(txid, vout, script_sig, sequence, witness)| TxIn {
            previous_output: OutPoint { txid, vout },
            script_sig,
            sequence,
            witness,
        });
    let output = (any::<u64>(), prop::collection::vec(any::<u8>(), 0..90)).prop_map(
        |(value, script_pubkey)| TxOut {
            value,
            script_pubkey,
        },
    );
    (
        any::<i32>(),
        prop::collection::vec(input, 1..5),
        prop::collection::vec(output, 0..5),
        any::<u32>(),
    )
        .prop_map(|(version, inputs, outputs, lock_time)| Transaction {
            version,
            inputs,
            outputs,
            lock_time,
        })
}

fn round_trip(msg: &WireMessage) -> Result<(), TestCaseError> {
    let decoded = WireMessage::decode(msg.command(), &msg.payload()).unwrap();
    prop_assert_eq!(&decoded, msg);
    let framed = msg.to_frame(NetworkId::Simnet).unwrap();
    let frame = unframe_message(&framed, NetworkId::Simnet).unwrap();
    prop_assert_eq!(frame.consumed, framed.len());
    prop_assert_eq!(frame.skipped, 0);
    prop_assert_eq!(
        WireMessage::decode(&frame.command, &frame.payload).unwrap(),
        msg.clone()
    );
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn version_round_trip(
        protocol_version in 70001i32..80000,
        services in any::<u64>(),
        timestamp in any::<i64>(),
        addr_recv in net_addr(),
        addr_from in net_addr(),
        nonce in any::<u64>(),
        user_agent in "[ -~]{0,60}",
        start_height in any::<i32>(),
        relay in any::<bool>(),
    ) {
        round_trip(&WireMessage::Version(VersionPayload {
            protocol_version, services, timestamp, addr_recv, addr_from, nonce, user_agent, start_height, relay,
        }))?;
    }

    #[test]
    fn ping_pong_round_trip(nonce in any::<u64>()) {
        round_trip(&WireMessage::Ping(nonce))?;
        round_trip(&WireMessage::Pong(nonce))?;
    }

    #[test]
    fn addr_round_trip(entries in prop::collection::vec((any::<u32>(), net_addr()), 0..50)) {
        let entries = entries.into_iter().map(|(timestamp, addr)| AddrEntry { timestamp, addr }).collect();
        round_trip(&WireMessage::Addr(entries))?;
    }

    #[test]
    fn inventory_messages_round_trip(items in inv_items()) {
        round_trip(&WireMessage::Inv(items.clone()))?;
        round_trip(&WireMessage::GetData(items.clone()))?;
        round_trip(&WireMessage::NotFound(items))?;
    }

    #[test]
    fn getblocks_round_trip(version in any::<u32>(), locator in prop::collection::vec(hash(), 1..30), stop in hash()) {
        round_trip(&WireMessage::GetBlocks(GetBlocks { version, locator, stop }))?;
    }

    #[test]
    fn tx_round_trip_and_txid_oracle(tx in transaction()) {
        round_trip(&WireMessage::Tx(tx.clone()))?;
        let (back, used) = decode_transaction(&tx.encode()).unwrap();
        prop_assert_eq!(used, tx.encode().len());
        prop_assert_eq!(&back, &tx);
        prop_assert_eq!(*tx.txid().as_bytes(), oracle_sha256d(&tx.encode_legacy()));
    }

    #[test]
    fn varint_round_trip(n in any::<u64>()) {
        let enc = encode_varint(n);
        let expected_len = match n { 0..=0xfc => 1, 0xfd..=0xffff => 3, 0x1_0000..=0xffff_ffff => 5, _ => 9 };
        prop_assert_eq!(enc.len(), expected_len);
        prop_assert_eq!(decode_varint(&enc).unwrap(), (n, enc.len()));
    }

    #[test]
    fn non_minimal_varints_rejected(n in 0u64..=0xffff) {
        let mut wide = vec![0xfe];
        wide.extend_from_slice(&(n as u32).to_le_bytes());
        prop_assert!(decode_varint(&wide).is_err());
    }

    #[test]
    fn merkle_matches_oracle(leaves in prop::collection::vec(any::<[u8; 32]>(), 1..40)) {
        let hashes: Vec<Hash256> = leaves.iter().copied().map(Hash256::from_wire).collect();
        prop_assert_eq!(*merkle_root(&hashes).as_bytes(), oracle_merkle(&leaves));
    }

    #[test]
    fn op_return_scripts_match_hand_built(data in prop::collection::vec(any::<u8>(), 0..=MAX_OP_RETURN_DATA)) {
        let mut expected = vec![0x6a];
        match data.len() {
            0 => {}
            1..=75 => expected.push(data.len() as u8),
            n => expected.extend_from_slice(&[0x4c, n as u8]),
        }
        expected.extend_from_slice(&data);
        prop_assert_eq!(&op_return_script(&data), &expected);
        prop_assert_eq!(op_return_data(&expected), Some(Ok(data)));
    }

    #[test]
    fn every_strict_prefix_needs_more_data(payload in prop::collection::vec(any::<u8>(), 0..200), cut in any::<prop::sample::Index>()) {
        let framed = frame_message(NetworkId::Simnet, "tx", &payload).unwrap();
        let at = cut.index(framed.len());
        prop_assert_eq!(unframe_message(&framed[..at], NetworkId::Simnet), Err(FrameError::NeedMoreData));
    }

    #[test]
    fn mutated_frames_never_pass_as_the_original(
        payload in prop::collection::vec(any::<u8>(), 0..200),
        at in any::<prop::sample::Index>(),
        bit in 0u8..8,
    ) {
        let mut framed = frame_message(NetworkId::Simnet, "block", &payload).unwrap();
        let i = at.index(framed.len());
        framed[i] ^= 1 << bit;
        match unframe_message(&framed, NetworkId::Simnet) {
            Ok(f) => prop_assert!(f.command != "block" || f.payload != payload),
            Err(e) => {
                if i >= HEADER_LEN || (20..24).contains(&i) {
                    prop_assert_eq!(e, FrameError::BadChecksum);
                }
            }
        }
    }

    #[test]
    fn garbage_prefix_is_skipped(garbage in prop::collection::vec(0u8..0x0b, 0..64), payload in prop::collection::vec(any::<u8>(), 0..64)) {
        let framed = frame_message(NetworkId::Simnet, "ping", &payload).unwrap();
        let buf = [garbage.clone(), framed.clone()].concat();
        let f = unframe_message(&buf, NetworkId::Simnet).unwrap();
        prop_assert_eq!(f.skipped, garbage.len());
        prop_assert_eq!(f.consumed, buf.len());
        prop_assert_eq!(f.payload, payload);
    }

    #[test]
    fn foreign_magic_is_wrong_network(payload in prop::collection::vec(any::<u8>(), 0..64)) {
        for other in [NetworkId::Mainnet, NetworkId::Testnet3] {
            let framed = frame_message(other, "inv", &payload).unwrap();
            prop_assert_eq!(unframe_message(&framed, NetworkId::Simnet), Err(FrameError::WrongNetwork));
        }
    }
}

const GENESIS_HEX: &str = "0100000000000000000000000000000000000000000000000000000000000000000000003ba3edfd7a7b12b27ac72c3e67768f617fc81bc3888a51323a9fb8aa4b1e5e4a29ab5f49ffff001d1dac2b7c0101000000010000000000000000000000000000000000000000000000000000000000000000ffffffff4d04ffff001d0104455468652054696d65732030332f4a616e2f32303039204368616e63656c6c6f72206f6e206272696e6b206f66207365636f6e64206261696c6f757420666f722062616e6b73ffffffff0100f2052a01000000434104678afdb0fe5548271967f1a67130b7105cd6a828e03909a67962e0ea1f61deb649f6bc3f4cef38c4f35504e51ec112de5c384df7ba0b8d578a4c702b6bf11d5fac00000000";

#[test]
fn mainnet_genesis_block() {
    let raw = hex::decode(GENESIS_HEX).unwrap();
    let block = decode_block(&raw).unwrap();
    assert_eq!(
        block.block_hash().to_string(),
        "000000000019d6689c085ae165831e934ff763ae46a2a6c172b3f1b60a8ce26f"
    );
    assert_eq!(
        block.header.merkle_root.to_string(),
        "4a5e1e4baab89f3a32518a88c31bc87f618f76673e2cc77ab2127b7afdeda33b"
    );
    assert_eq!(block.compute_merkle_root(), block.header.merkle_root);
    assert_eq!(block.encode(), raw);
    block.check_integrity(&block.block_hash()).unwrap();
    assert_eq!(block.transactions[0].outputs[0].value, 50 * 100_000_000);
}

#[test]
fn verack_frame_fixture() {
    // Header of a mainnet `verack`: magic, command, zero length, checksum of the empty payload.
    let raw = hex::decode("f9beb4d976657261636b000000000000000000005df6e0e2").unwrap();
    let f = unframe_message(&raw, NetworkId::Mainnet).unwrap();
    assert_eq!(f.command, "verack");
    assert!(f.payload.is_empty());
    assert_eq!(
        frame_message(NetworkId::Mainnet, "verack", &[]).unwrap(),
        raw
    );
}
