use std::collections::HashMap;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use oprv_cli::args::GlobalArgs;
use oprv_cli::config::CliConfig;
use oprv_cli::run;
use oprv_core::rendezvous::{decode_payload, encode_endpoint, Decoded, Endpoint};
use oprv_core::simnet::{
    build_chain, op_return_tx, MockExplorer, MockRpcConfig, MockRpcNode, SimScript, SimServer,
};
use oprv_core::wire::{extract_op_returns, NetworkId, Transaction};
use serde_json::Value;

const KEY_HEX: &str = "8f1c2a3b4c5d6e7f8091a2b3c4d5e6f708192a3b4c5d6e7f8091a2b3c4d5e6f7";

struct Run {
    code: i32,
    out: String,
    err: String,
}

impl Run {
    fn lines(&self) -> Vec<Value> {
        self.out
            .lines()
            .map(|l| serde_json::from_str(l).unwrap_or_else(|_| panic!("not JSON: {l}")))
            .collect()
    }
}

fn oprv_env(args: &[&str], env: &[(&str, &str)]) -> Run {
    let env: HashMap<String, String> = env
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
    let lookup = |k: &str| env.get(k).cloned();
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let stop = AtomicBool::new(false);
    let argv = std::iter::once("oprv").chain(args.iter().copied());
    let code = run(argv, &lookup, &mut out, &mut err, &stop);
    Run {
        code,
        out: String::from_utf8(out).unwrap(),
        err: String::from_utf8(err).unwrap(),
    }
}

fn oprv(args: &[&str]) -> Run {
    oprv_env(args, &[])
}

fn serve(script: SimScript) -> (SimServer, String) {
    let server = SimServer::start(script);
    let addr = server.listen_tcp("127.0.0.1:0".parse().unwrap()).unwrap();
    (server, addr.to_string())
}

fn cp_arg(dir: &Path) -> String {
    dir.join("cp.json").to_string_lossy().into_owned()
}

#[test]
fn watch_once_then_nothing_new() {
    let (_server, addr) = serve(SimScript::default_scenario());
    let dir = tempfile::tempdir().unwrap();
    let cp = cp_arg(dir.path());
    let args = [
        "--network",
        "simnet",
        "--peer",
        &addr,
        "--checkpoint",
        &cp,
        "watch",
        "--once",
    ];
    let first = oprv(&args);
    assert_eq!(first.code, 0, "{}", first.err);
    let lines = first.lines();
    assert_eq!(lines.len(), 1);
    assert_eq!(lines[0]["ip"], "10.0.0.103");
    assert_eq!(lines[0]["port"], 9999);
    assert_eq!(lines[0]["height"], 3);
    assert_eq!(lines[0]["fragmented"], false);

    let again = oprv(&args);
    assert_eq!(again.code, 0);
    assert!(again.out.is_empty());
    let scan = oprv(&[
        "--network",
        "simnet",
        "--peer",
        &addr,
        "--checkpoint",
        &cp,
        "scan",
    ]);
    assert_eq!((scan.code, scan.out.as_str()), (0, ""));
    assert!(!Path::new(&format!("{cp}.lock")).exists());
}

#[test]
fn text_format() {
    let (_server, addr) = serve(SimScript::default_scenario());
    let dir = tempfile::tempdir().unwrap();
    let r = oprv(&[
        "--network",
        "simnet",
        "--peer",
        &addr,
        "--checkpoint",
        &cp_arg(dir.path()),
        "--format",
        "text",
        "scan",
    ]);
    assert_eq!(r.code, 0);
    assert!(
        r.out.starts_with("10.0.0.103:9999 at height 3 in "),
        "{}",
        r.out
    );
}

#[test]
fn quorum_of_peers_agrees() {
    let (_a, addr_a) = serve(SimScript::default_scenario());
    let (_b, addr_b) = serve(SimScript::default_scenario());
    let (_c, addr_c) = serve(SimScript::default_scenario());
    let dir = tempfile::tempdir().unwrap();
    let r = oprv(&[
        "--network",
        "simnet",
        "--peer",
        &addr_a,
        "--peer",
        &addr_b,
        "--peer",
        &addr_c,
        "--checkpoint",
        &cp_arg(dir.path()),
        "scan",
    ]);
    assert_eq!(r.code, 0, "{}", r.err);
    assert_eq!(r.lines().len(), 1);
}

#[test]
fn sealed_endpoint_needs_key() {
    let key = hex::decode(KEY_HEX).unwrap();
    let payload = encode_endpoint(&"192.0.2.7:4444".parse().unwrap(), Some(&key))
        .unwrap()
        .remove(0);
    let (_server, addr) = serve(SimScript::new(build_chain(vec![vec![op_return_tx(
        b"sealed", &payload,
    )]])));
    let dir = tempfile::tempdir().unwrap();
    let cp1 = cp_arg(dir.path());
    let without = oprv(&[
        "--network",
        "simnet",
        "--peer",
        &addr,
        "--checkpoint",
        &cp1,
        "scan",
    ]);
    assert_eq!((without.code, without.out.as_str()), (0, ""));
    let cp2 = dir.path().join("cp2.json").to_string_lossy().into_owned();
    let with = oprv_env(
        &[
            "--network",
            "simnet",
            "--peer",
            &addr,
            "--checkpoint",
            &cp2,
            "scan",
        ],
        &[("RV_KEY", KEY_HEX)],
    );
    assert_eq!(with.code, 0);
    assert_eq!(with.lines()[0]["ip"], "192.0.2.7");
}

#[test]
fn unreachable_peers_exit_3_after_retries() {
    let port = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let peer = format!("127.0.0.1:{port}");
    let dir = tempfile::tempdir().unwrap();
    let started = Instant::now();
    let r = oprv(&[
        "--network",
        "simnet",
        "--peer",
        &peer,
        "--checkpoint",
        &cp_arg(dir.path()),
        "--retry-base-ms",
        "50",
        "scan",
    ]);
    assert_eq!(r.code, 3, "{}", r.err);
    assert!(r.err.contains("gave up after 3 attempts"), "{}", r.err);
    assert!(started.elapsed() >= Duration::from_millis(150));
}

#[test]
fn locked_checkpoint_is_refused() {
    let (_server, addr) = serve(SimScript::default_scenario());
    let dir = tempfile::tempdir().unwrap();
    let cp = cp_arg(dir.path());
    std::fs::write(format!("{cp}.lock"), "1").unwrap();
    let r = oprv(&[
        "--network",
        "simnet",
        "--peer",
        &addr,
        "--checkpoint",
        &cp,
        "scan",
    ]);
    assert_eq!(r.code, 2);
    assert!(r.err.contains("in use by another watcher"));
}

#[test]
fn checkpoint_for_another_network_is_refused() {
    let (_server, addr) = serve(SimScript::default_scenario());
    let dir = tempfile::tempdir().unwrap();
    let cp = cp_arg(dir.path());
    oprv_core::rendezvous::ScanCheckpoint::new(NetworkId::Regtest)
        .save(Path::new(&cp))
        .unwrap();
    let r = oprv(&[
        "--network",
        "simnet",
        "--peer",
        &addr,
        "--checkpoint",
        &cp,
        "scan",
    ]);
    assert_eq!(r.code, 2, "{}", r.err);
}

#[test]
fn follow_polls_until_stopped() {
    let (_server, addr) = serve(SimScript::default_scenario());
    let dir = tempfile::tempdir().unwrap();
    let cp = cp_arg(dir.path());
    let stop = Arc::new(AtomicBool::new(false));
    let flag = Arc::clone(&stop);
    let worker = std::thread::spawn(move || {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let args = [
            "oprv",
            "--network",
            "simnet",
            "--peer",
            &addr,
            "--checkpoint",
            &cp,
            "watch",
            "--follow",
            "--interval",
            "1",
        ];
        let code = run(args, &|_: &str| None, &mut out, &mut err, &flag);
        (code, String::from_utf8(out).unwrap())
    });
    std::thread::sleep(Duration::from_millis(1500));
    stop.store(true, Ordering::SeqCst);
    let (code, out) = worker.join().unwrap();
    assert_eq!(code, 0);
    assert_eq!(out.lines().count(), 1);
}

fn detect_chain() -> Vec<oprv_core::wire::Block> {
    let plain = encode_endpoint(&"10.0.0.103:9999".parse().unwrap(), None)
        .unwrap()
        .remove(0);
    let other = encode_endpoint(&"[2001:db8::1]:443".parse().unwrap(), None)
        .unwrap()
        .remove(0);
    let benign: Vec<Vec<u8>> = vec![
        b"hello world".to_vec(),
        oprv_core::wire::sha256(b"document").to_vec(),
        hex::decode("6f6d6e69000000000000001f0000000005f5e100").unwrap(),
        [b"DOCPROOF".as_slice(), &oprv_core::wire::sha256(b"x")].concat(),
        b"Happy birthday!".to_vec(),
    ];
    let mut blocks: Vec<Vec<Transaction>> = vec![Vec::new(); 4];
    blocks[1].push(op_return_tx(b"c1", &plain));
    blocks[3].push(op_return_tx(b"c2", &other));
    for (i, b) in benign.iter().enumerate() {
        blocks[i % 4].push(op_return_tx(&[b'b', i as u8], b));
    }
    build_chain(blocks)
}

#[test]
fn detect_counts_and_flags() {
    let (_server, addr) = serve(SimScript::new(detect_chain()));
    let r = oprv(&["--network", "simnet", "--peer", &addr, "detect"]);
    assert_eq!(r.code, 0, "{}", r.err);
    let lines = r.lines();
    let summary = &lines.last().unwrap()["summary"];
    assert_eq!(summary["scanned"], 7);
    assert_eq!(summary["blocks"], 4);
    assert!(summary["flagged"].as_u64().unwrap() >= 2);
    let decoded: Vec<&Value> = lines
        .iter()
        .filter(|l| !l["decoded_endpoint"].is_null())
        .collect();
    assert_eq!(decoded.len(), 2);
    assert_eq!(decoded[0]["height"], 2);
    assert_eq!(decoded[0]["decoded_endpoint"]["ip"], "10.0.0.103");

    let empty = oprv(&[
        "--network",
        "simnet",
        "--peer",
        &addr,
        "detect",
        "--from-height",
        "100",
    ]);
    assert_eq!(empty.code, 0);
    assert_eq!(
        empty.lines(),
        vec![
            serde_json::json!({"summary": {"blocks": 0, "scanned": 0, "flagged": 0, "malformed": 0}})
        ]
    );
}

#[test]
fn detect_counts_malformed_pushes() {
    let mut odd = op_return_tx(b"odd", b"");
    odd.outputs[0].script_pubkey = vec![0x6a, 0x4c];
    let (_server, addr) = serve(SimScript::new(build_chain(vec![vec![odd]])));
    let r = oprv(&["--network", "simnet", "--peer", &addr, "detect"]);
    assert_eq!(r.code, 0);
    assert_eq!(r.lines()[0]["summary"]["malformed"], 1);
}

fn rpc_args(node: &MockRpcNode) -> Vec<String> {
    vec![
        "--network".into(),
        "regtest".into(),
        "--rpc-url".into(),
        node.url(),
    ]
}

fn publish(node: &MockRpcNode, extra: &[&str], env: &[(&str, &str)]) -> Run {
    let mut args: Vec<String> = rpc_args(node);
    args.push("publish".into());
    args.extend(extra.iter().map(|s| s.to_string()));
    let argv: Vec<&str> = args.iter().map(String::as_str).collect();
    oprv_env(&argv, env)
}

const CREDS: [(&str, &str); 2] = [("RPC_USER", "user"), ("RPC_PASSWORD", "pass")];

#[test]
fn publish_plain_and_sealed() {
    let node = MockRpcNode::start(MockRpcConfig::funded()).unwrap();
    let r = publish(&node, &["10.0.0.103:9999"], &CREDS);
    assert_eq!(r.code, 0, "{}", r.err);
    let receipts = r.lines();
    assert_eq!(receipts.len(), 1);
    assert_eq!(receipts[0]["fee_paid"], 500);
    assert_eq!(receipts[0]["chunks"], 1);
    let tx = node.take_mempool().remove(0);
    assert_eq!(receipts[0]["txid"], tx.txid().to_string());
    let data = extract_op_returns(&tx).outputs.remove(0).data;
    assert_eq!(
        decode_payload(&data, None).unwrap(),
        Decoded::Endpoint("10.0.0.103:9999".parse().unwrap())
    );

    let env = [CREDS[0], CREDS[1], ("RV_KEY", KEY_HEX)];
    let r = publish(&node, &["--encrypt", "tcp://[2001:db8::2]:8443"], &env);
    assert_eq!(r.code, 0, "{}", r.err);
    let tx = node.take_mempool().remove(0);
    let data = extract_op_returns(&tx).outputs.remove(0).data;
    let key = hex::decode(KEY_HEX).unwrap();
    assert_eq!(decode_payload(&data, None).unwrap(), Decoded::NotOurs);
    let ep: Endpoint = "[2001:db8::2]:8443".parse().unwrap();
    assert_eq!(
        decode_payload(&data, Some(&key)).unwrap(),
        Decoded::Endpoint(ep)
    );
}

#[test]
fn publish_refusals() {
    let node = MockRpcNode::start(MockRpcConfig::funded()).unwrap();
    let r = publish(&node, &["--encrypt", "10.0.0.1:80"], &CREDS);
    assert_eq!(r.code, 2);
    assert!(r.err.contains("key required"));

    let r = oprv_env(
        &[
            "--network",
            "mainnet",
            "--rpc-url",
            &node.url(),
            "publish",
            "10.0.0.1:80",
        ],
        &CREDS,
    );
    assert_eq!(r.code, 2);
    assert!(r.err.contains("mainnet"));

    let main_node = MockRpcNode::start(MockRpcConfig {
        chain: "main".into(),
        ..MockRpcConfig::funded()
    })
    .unwrap();
    let r = publish(&main_node, &["10.0.0.1:80"], &CREDS);
    assert_eq!(r.code, 2);
    assert!(main_node.mempool().is_empty());

    let r = publish(&node, &["10.0.0.1:0"], &CREDS);
    assert_eq!(r.code, 2);
    assert!(r.err.contains("invalid endpoint"));

    let r = publish(
        &node,
        &["10.0.0.1:80"],
        &[("RPC_USER", "user"), ("RPC_PASSWORD", "wrong")],
    );
    assert_eq!(r.code, 3);
    assert!(r.err.contains("authentication"));

    let r = oprv_env(&["--network", "regtest", "publish", "10.0.0.1:80"], &CREDS);
    assert_eq!(r.code, 2);
    assert!(node.mempool().is_empty());
}

#[test]
fn publish_then_watch_end_to_end() {
    let node = MockRpcNode::start(MockRpcConfig::funded()).unwrap();
    assert_eq!(publish(&node, &["198.51.100.4:31337"], &CREDS).code, 0);
    let (_server, addr) = serve(SimScript::new(build_chain(vec![
        vec![],
        node.take_mempool(),
    ])));
    let dir = tempfile::tempdir().unwrap();
    let r = oprv(&[
        "--network",
        "simnet",
        "--peer",
        &addr,
        "--checkpoint",
        &cp_arg(dir.path()),
        "scan",
    ]);
    assert_eq!(r.code, 0, "{}", r.err);
    let lines = r.lines();
    assert_eq!(
        (
            lines[0]["ip"].as_str(),
            lines[0]["port"].as_u64(),
            lines[0]["height"].as_u64()
        ),
        (Some("198.51.100.4"), Some(31337), Some(2))
    );
}

#[test]
fn explorer_fallback_is_labelled() {
    let payload = encode_endpoint(&"10.0.0.103:9999".parse().unwrap(), None)
        .unwrap()
        .remove(0);
    let txid = "ab".repeat(32);
    let body = serde_json::json!({"hash": txid, "outputs": [
        {"value": 0, "script": hex::encode(oprv_core::wire::op_return_script(&payload)), "script_type": "null-data"},
        {"value": 1000, "script": "0014aabbccddeeff00112233445566778899aabbccdd"}
    ]});
    let explorer = MockExplorer::start(vec![(txid.clone(), 200, body.to_string())]).unwrap();
    let r = oprv(&[
        "--network",
        "testnet3",
        "--explorer",
        &explorer.base_url(),
        "watch",
        "--txid",
        &txid,
    ]);
    assert_eq!(r.code, 0, "{}", r.err);
    assert!(r.err.contains("centralised fallback"));
    let lines = r.lines();
    assert_eq!(lines.len(), 1);
    assert_eq!(lines[0]["source"], "explorer");
    assert_eq!(lines[0]["vout"], 0);

    let d = oprv(&[
        "--network",
        "testnet3",
        "--explorer",
        &explorer.base_url(),
        "detect",
        "--txid",
        &txid,
    ]);
    assert_eq!(d.code, 0);
    assert_eq!(d.lines().last().unwrap()["summary"]["scanned"], 1);

    let missing = oprv(&[
        "--network",
        "testnet3",
        "--explorer",
        &explorer.base_url(),
        "watch",
        "--txid",
        &"cd".repeat(32),
    ]);
    assert_eq!(missing.code, 3);
    let no_base = oprv(&["--network", "regtest", "watch", "--txid", &txid]);
    assert_eq!(no_base.code, 2);
}

#[test]
fn config_precedence_flags_env_file() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("oprv.toml");
    std::fs::write(
        &file,
        r#"
network = "regtest"
peers = ["10.1.1.1:18444"]
min_confirmations = 6
key_hex = "1111111111111111111111111111111111111111111111111111111111111111"
rpc_url = "http://127.0.0.1:18443"
rpc_user = "file-user"
"#,
    )
    .unwrap();
    let base = GlobalArgs {
        config: Some(file.clone()),
        ..Default::default()
    };
    let none = |_: &str| None;
    let cfg = CliConfig::resolve(&base, &none).unwrap();
    assert_eq!(cfg.network, NetworkId::Regtest);
    assert_eq!(cfg.peers, vec!["10.1.1.1:18444"]);
    assert_eq!(cfg.min_confirmations, 6);
    assert_eq!(cfg.key_bytes().unwrap(), &[0x11; 32]);

    let env = |k: &str| (k == "RV_KEY").then(|| "22".repeat(32));
    let cfg = CliConfig::resolve(&base, &env).unwrap();
    assert_eq!(cfg.key_bytes().unwrap(), &[0x22; 32]);

    let flags = GlobalArgs {
        key_hex: Some("33".repeat(32)),
        network: Some("simnet".into()),
        peers: vec!["127.0.0.1".into()],
        min_confirmations: Some(2),
        ..base.clone()
    };
    let cfg = CliConfig::resolve(&flags, &env).unwrap();
    assert_eq!(cfg.key_bytes().unwrap(), &[0x33; 32]);
    assert_eq!(cfg.network, NetworkId::Simnet);
    assert_eq!(cfg.peers, vec!["127.0.0.1:18444"]);
    assert_eq!(cfg.min_confirmations, 2);

    std::fs::write(&file, "netwrk = \"regtest\"\n").unwrap();
    assert!(CliConfig::resolve(&base, &none).is_err());
    let r = oprv(&["--config", file.to_str().unwrap(), "scan"]);
    assert_eq!(r.code, 2);
    let r = oprv(&["--key-hex", "abc", "scan"]);
    assert_eq!(r.code, 2);
    assert!(!r.err.contains("abc"));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(oprv(&["frobnicate"]).code, 2);
    assert_eq!(oprv(&["watch", "--once", "--follow"]).code, 2);
    assert_eq!(oprv(&["--quorum", "1.5", "scan"]).code, 2);
    let help = oprv(&["--help"]);
    assert_eq!(help.code, 0);
    assert!(help.out.contains("serve-sim"));
}

#[test]
fn bad_scenario_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{\n  \"blocks\": [\n    {\"txs\": [}\n  ]\n}\n").unwrap();
    let r = oprv(&["serve-sim", path.to_str().unwrap()]);
    assert_eq!(r.code, 2);
    assert!(
        r.err.contains("line 3") && r.err.contains("column"),
        "{}",
        r.err
    );
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_oprv"))
}

#[test]
fn served_scenario_over_the_binary() {
    let mut server = bin()
        .args(["serve-sim"])
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut first = String::new();
    BufReader::new(server.stdout.take().unwrap())
        .read_line(&mut first)
        .unwrap();
    let addr = first
        .trim()
        .strip_prefix("listening on ")
        .expect("listening line")
        .to_string();
    assert!(addr.starts_with("127.0.0.1:"));

    let dir = tempfile::tempdir().unwrap();
    let watch = bin()
        .args([
            "--network",
            "simnet",
            "--peer",
            &addr,
            "--checkpoint",
            &cp_arg(dir.path()),
            "watch",
            "--once",
        ])
        .output()
        .unwrap();
    assert_eq!(watch.status.code(), Some(0));
    let line: Value = serde_json::from_slice(&watch.stdout).unwrap();
    assert_eq!(line["ip"], "10.0.0.103");

    let killed = Command::new("kill")
        .args(["-INT", &server.id().to_string()])
        .status()
        .unwrap();
    assert!(killed.success());
    let status = server.wait().unwrap();
    assert_eq!(status.code(), Some(0));
}

#[test]
fn secrets_never_printed_at_any_verbosity() {
    let password = "s3cret-rpc-password-value";
    let node = MockRpcNode::start(MockRpcConfig {
        password: password.into(),
        ..MockRpcConfig::funded()
    })
    .unwrap();
    let (_server, addr) = serve(SimScript::default_scenario());
    let dir = tempfile::tempdir().unwrap();
    let cp = cp_arg(dir.path());
    let runs: Vec<Vec<String>> = vec![
        vec![
            "-vvv",
            "--network",
            "regtest",
            "--rpc-url",
            &node.url(),
            "publish",
            "--encrypt",
            "10.0.0.1:80",
        ],
        vec![
            "-vvv",
            "--network",
            "regtest",
            "--rpc-url",
            &node.url(),
            "publish",
            "10.0.0.1:81",
        ],
        vec![
            "-vvv",
            "--network",
            "simnet",
            "--peer",
            &addr,
            "--checkpoint",
            &cp,
            "watch",
            "--once",
        ],
        vec!["-vvv", "--network", "simnet", "--peer", &addr, "detect"],
    ]
    .into_iter()
    .map(|v| v.into_iter().map(String::from).collect())
    .collect();
    for (i, args) in runs.iter().enumerate() {
        for pw in [password, "wrong-password-also-secret"] {
            let out = bin()
                .args(args)
                .env("RPC_USER", "user")
                .env("RPC_PASSWORD", pw)
                .env("RV_KEY", KEY_HEX)
                .output()
                .unwrap();
            let all = [out.stdout, out.stderr].concat();
            let text = String::from_utf8_lossy(&all);
            assert!(!text.contains(pw), "run {i} leaked the password");
            assert!(
                !text.to_lowercase().contains(KEY_HEX),
                "run {i} leaked the key"
            );
        }
    }
    let fresh = MockRpcNode::start(MockRpcConfig {
        password: password.into(),
        ..MockRpcConfig::funded()
    })
    .unwrap();
    let url_creds = format!(
        "http://user:{password}@{}",
        fresh.url().trim_start_matches("http://")
    );
    let out = bin()
        .args([
            "-vvv",
            "--network",
            "regtest",
            "--rpc-url",
            &url_creds,
            "publish",
            "10.0.0.1:82",
        ])
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(!String::from_utf8_lossy(&[out.stdout, out.stderr].concat()).contains(password));
}
