use std::time::Duration;

use oprv_core::peer::{handshake, PeerConfig, Quorum};
use oprv_core::rendezvous::{
    scan_blocks, scan_blocks_with, Endpoint, MemorySource, PayloadCodec, PeerSource,
    ScanCheckpoint, ScanError, ScanOptions,
};
use oprv_core::simnet::{build_chain, op_return_tx, SimScript, SimServer};
use oprv_core::wire::{Block, NetworkId, Transaction};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn ep(s: &str) -> Endpoint {
    s.parse().unwrap()
}

fn memory(chain: Vec<Block>) -> MemorySource {
    MemorySource {
        network: NetworkId::Simnet,
        chain,
    }
}

fn fresh() -> ScanCheckpoint {
    ScanCheckpoint::new(NetworkId::Simnet)
}

/// One fragmented message: the first fragment lands in block 5, the rest in block 2.
fn split_chain(key: Option<&[u8]>) -> Vec<Block> {
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let parts = PayloadCodec::default()
        .encode_fragmented(&ep("[2001:db8::5]:4443").encode_body(), key, 10, &mut rng)
        .unwrap();
    assert!(parts.len() >= 2);
    let mut blocks: Vec<Vec<Transaction>> = vec![Vec::new(); 6];
    for (i, part) in parts.iter().enumerate().skip(1).rev() {
        blocks[1].push(op_return_tx(&[i as u8], part));
    }
    blocks[4].push(op_return_tx(b"frag-a", &parts[0]));
    build_chain(blocks)
}

#[test]
fn default_scenario_discovers_block_three() {
    let script = SimScript::default_scenario();
    let (found, cp) = scan_blocks(&mut memory(script.chain.clone()), fresh(), None, 1).unwrap();
    assert_eq!(found.len(), 1);
    assert_eq!(found[0].endpoint, ep("10.0.0.103:9999"));
    assert_eq!(found[0].height, 3);
    assert_eq!(found[0].block_hash, script.chain[3].block_hash());
    assert_eq!(found[0].txid, script.chain[3].transactions[1].txid());
    assert!(!found[0].fragmented);
    assert_eq!(cp.last_height, 5);
    assert_eq!(cp.last_block_hash, script.chain[5].block_hash());
}

#[test]
fn same_result_over_p2p() {
    let server = SimServer::start(SimScript::default_scenario());
    let sessions = (0..3)
        .map(|_| {
            let (_, s) = server.connect_in_process();
            let cfg = PeerConfig::new("sim", NetworkId::Simnet)
                .with_timeouts(Duration::from_secs(2), Duration::from_secs(2));
            handshake(cfg, s).unwrap()
        })
        .collect();
    let mut source = PeerSource::new(sessions, Quorum::default()).unwrap();
    let (found, cp) = scan_blocks(&mut source, fresh(), None, 1).unwrap();
    let (expected, expected_cp) =
        scan_blocks(&mut memory(server.script().chain.clone()), fresh(), None, 1).unwrap();
    assert_eq!(found, expected);
    assert_eq!(cp, expected_cp);
}

#[test]
fn fragments_across_blocks_complete_at_the_later_one() {
    for key in [None, Some(&[4u8; 32][..])] {
        let chain = split_chain(key);
        let (found, cp) = scan_blocks(&mut memory(chain.clone()), fresh(), key, 1).unwrap();
        assert_eq!(found.len(), 1, "key {key:?}");
        assert_eq!(found[0].endpoint, ep("[2001:db8::5]:4443"));
        assert_eq!(found[0].height, 5);
        assert!(found[0].fragmented);
        assert_eq!(found[0].txid, chain[5].transactions[1].txid());
        assert!(cp.fragments.pending.is_empty());
    }
}

#[test]
fn sealed_payloads_need_the_right_key() {
    let key = [8u8; 32];
    let payload = oprv_core::rendezvous::encode_endpoint(&ep("1.2.3.4:5555"), Some(&key))
        .unwrap()
        .remove(0);
    let chain = build_chain(vec![vec![op_return_tx(b"s", &payload)]]);
    let (found, _) = scan_blocks(&mut memory(chain.clone()), fresh(), None, 1).unwrap();
    assert!(found.is_empty());
    let opts = ScanOptions {
        key: Some(vec![9u8; 32]),
        ..ScanOptions::for_network(NetworkId::Simnet)
    };
    let report = scan_blocks_with(&mut memory(chain.clone()), &mut fresh(), &opts, |_, _| {
        Ok(())
    })
    .unwrap();
    assert!(report.discoveries.is_empty());
    assert_eq!(report.diagnostics.auth_failed, 1);
    let (found, _) = scan_blocks(&mut memory(chain), fresh(), Some(&key), 1).unwrap();
    assert_eq!(found[0].endpoint, ep("1.2.3.4:5555"));
    assert!(matches!(
        scan_blocks(&mut memory(vec![]), fresh(), Some(&[0; 5]), 1),
        Err(ScanError::KeyWrongSize(5))
    ));
}

#[test]
fn empty_chain_advances_checkpoint() {
    let chain = build_chain(vec![Vec::new(); 4]);
    let (found, cp) = scan_blocks(&mut memory(chain.clone()), fresh(), None, 1).unwrap();
    assert!(found.is_empty());
    assert_eq!(cp.last_height, 4);
    assert_eq!(cp.last_block_hash, chain[4].block_hash());
    let (again, cp2) = scan_blocks(&mut memory(chain), cp.clone(), None, 1).unwrap();
    assert!(again.is_empty());
    assert_eq!(cp2, cp);
}

#[test]
fn confirmations_hold_back_recent_blocks() {
    let script = SimScript::default_scenario();
    let (found, cp) = scan_blocks(&mut memory(script.chain.clone()), fresh(), None, 3).unwrap();
    assert_eq!(cp.last_height, 3);
    assert_eq!(found.len(), 1);
    let (found, cp) = scan_blocks(&mut memory(script.chain.clone()), fresh(), None, 4).unwrap();
    assert_eq!(cp.last_height, 2);
    assert!(found.is_empty());
    let (_, cp) = scan_blocks(&mut memory(script.chain), fresh(), None, 10).unwrap();
    assert_eq!(cp, fresh());
}

#[test]
fn restart_equivalence_for_every_split() {
    let chain = split_chain(None);
    let whole = scan_blocks(&mut memory(chain.clone()), fresh(), None, 1).unwrap();
    for k in 0..chain.len() {
        let (mut first, cp) =
            scan_blocks(&mut memory(chain[..=k].to_vec()), fresh(), None, 1).unwrap();
        let json = cp.to_json();
        let restored = ScanCheckpoint::from_json(&json).unwrap();
        let (second, cp_end) = scan_blocks(&mut memory(chain.clone()), restored, None, 1).unwrap();
        first.extend(second);
        assert_eq!((first, cp_end), whole, "split at {k}");
    }
}

#[test]
fn deterministic() {
    let chain = split_chain(Some(&[1; 32]));
    let a = scan_blocks(&mut memory(chain.clone()), fresh(), Some(&[1; 32]), 1).unwrap();
    let b = scan_blocks(&mut memory(chain), fresh(), Some(&[1; 32]), 1).unwrap();
    assert_eq!(a, b);
}

#[test]
fn rescanning_a_block_does_not_repeat_fragmented_discovery() {
    let chain = split_chain(None);
    let (found, mut cp) = scan_blocks(&mut memory(chain.clone()), fresh(), None, 1).unwrap();
    assert_eq!(found.len(), 1);
    // Simulate a crash after processing block 5 but before saving its height.
    cp.last_height = 4;
    cp.last_block_hash = chain[4].block_hash();
    let (again, _) = scan_blocks(&mut memory(chain), cp, None, 1).unwrap();
    assert!(again.is_empty());
}

#[test]
fn stale_fragments_expire() {
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let parts = PayloadCodec::default()
        .encode_fragmented(&ep("9.9.9.9:9999").encode_body(), None, 3, &mut rng)
        .unwrap();
    let mut blocks: Vec<Vec<Transaction>> = vec![Vec::new(); 150];
    blocks[0].push(op_return_tx(b"early", &parts[0]));
    blocks[1].push(op_return_tx(b"early2", &parts[1]));
    blocks[140].push(op_return_tx(b"late", &parts[2]));
    let chain = build_chain(blocks);
    let opts = ScanOptions::for_network(NetworkId::Simnet);
    let mut cp = fresh();
    let report = scan_blocks_with(&mut memory(chain), &mut cp, &opts, |_, _| Ok(())).unwrap();
    assert!(report.discoveries.is_empty());
    assert_eq!(report.diagnostics.expired_fragment_sets, 1);
    assert_eq!(cp.fragments.pending.len(), 1);
    assert_eq!(
        cp.fragments
            .pending
            .values()
            .next()
            .unwrap()
            .first_seen_height,
        141
    );
}

#[test]
fn on_block_sees_every_advance() {
    let script = SimScript::default_scenario();
    let mut heights = Vec::new();
    let mut cp = fresh();
    let opts = ScanOptions::for_network(NetworkId::Simnet);
    scan_blocks_with(&mut memory(script.chain), &mut cp, &opts, |c, found| {
        heights.push((c.last_height, found.len()));
        Ok(())
    })
    .unwrap();
    assert_eq!(heights, vec![(1, 0), (2, 0), (3, 1), (4, 0), (5, 0)]);
}

#[test]
fn failing_callback_stops_the_scan() {
    let script = SimScript::default_scenario();
    let mut cp = fresh();
    let opts = ScanOptions::for_network(NetworkId::Simnet);
    let err = scan_blocks_with(&mut memory(script.chain), &mut cp, &opts, |c, _| {
        if c.last_height == 2 {
            Err("disk full".into())
        } else {
            Ok(())
        }
    })
    .unwrap_err();
    assert_eq!(err, ScanError::Aborted("disk full".into()));
    assert_eq!(cp.last_height, 2);
}

#[test]
fn source_must_match_checkpoint() {
    let chain = build_chain(vec![Vec::new(); 2]);
    let other = build_chain(vec![vec![op_return_tx(b"fork", b"x")], vec![]]);
    let err = scan_blocks(
        &mut memory(chain.clone()),
        ScanCheckpoint::new(NetworkId::Testnet3),
        None,
        1,
    )
    .unwrap_err();
    assert!(matches!(err, ScanError::NetworkMismatch { .. }));
    let (_, mut cp) = scan_blocks(&mut memory(chain), fresh(), None, 1).unwrap();
    cp.last_height = 1;
    cp.last_block_hash = other[1].block_hash();
    let mut forked = other.clone();
    forked[2] = build_chain(vec![Vec::new(); 2])[2].clone();
    assert!(matches!(
        scan_blocks(&mut memory(forked), cp, None, 1),
        Err(ScanError::BrokenLinkage { height: 2, .. })
    ));
}

#[test]
fn malformed_and_foreign_pushes_are_counted_not_fatal() {
    let mut odd = op_return_tx(b"odd", b"");
    odd.outputs[0].script_pubkey = vec![0x6a, 0x05, 1, 2];
    let junk = op_return_tx(b"junk", b"hello world");
    let bad_body = op_return_tx(b"bad", &[0x52, 0x56, 0x01, 0x00, 0x04, 1, 2]);
    let chain = build_chain(vec![vec![odd, junk, bad_body]]);
    let mut cp = fresh();
    let report = scan_blocks_with(
        &mut memory(chain),
        &mut cp,
        &ScanOptions::for_network(NetworkId::Simnet),
        |_, _| Ok(()),
    )
    .unwrap();
    assert!(report.discoveries.is_empty());
    assert_eq!(report.diagnostics.malformed_pushes, 1);
    assert_eq!(report.diagnostics.malformed, 1);
    assert_eq!(cp.last_height, 1);
}
