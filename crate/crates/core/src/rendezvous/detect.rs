//! Flagging OP_RETURN payloads that look like rendezvous channels, ours or
//! anyone's.

use std::net::Ipv4Addr;
use std::sync::OnceLock;

use regex::Regex;
use serde::Serialize;

use super::endpoint::Endpoint;
use super::fragment::FRAGMENT_HEADER_LEN;
use super::payload::{
    Decoded, PayloadCodec, DEFAULT_TAG, FLAG_FRAGMENT, PAYLOAD_VERSION, PREFIX_LEN,
};
use crate::wire::{extract_op_returns, Block, Hash256, Transaction};

pub const SCORE_EXACT_DECODE: f64 = 1.0;
pub const SCORE_ENDPOINT_SHAPE: f64 = 0.4;
pub const SCORE_HEADER_SHAPE: f64 = 0.3;
pub const SCORE_ASCII_LOCATOR: f64 = 0.3;
/// Above the endpoint-shape score on its own: some 6-byte window of almost
/// any 80 random bytes looks like a routable address and a high port.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct DetectionPolicy {
    pub threshold: f64,
    pub tags: Vec<[u8; 2]>,
    pub keys: Vec<Vec<u8>>,
}

impl Default for DetectionPolicy {
    fn default() -> Self {
        DetectionPolicy {
            threshold: DEFAULT_THRESHOLD,
            tags: vec![DEFAULT_TAG],
            keys: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeuristicMatch {
    pub name: &'static str,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionReport {
    pub txid: Option<Hash256>,
    pub vout: Option<u32>,
    pub matched_heuristics: Vec<HeuristicMatch>,
    pub decoded_endpoint: Option<Endpoint>,
    /// Sum of matched scores, capped at 1.
    pub score: f64,
}

/// Score one payload. `None` when the total stays below the threshold.
pub fn detect(data: &[u8], policy: &DetectionPolicy) -> Option<DetectionReport> {
    let mut matched = Vec::new();
    let decoded_endpoint = exact_decode(data, policy);
    if decoded_endpoint.is_some() {
        matched.push(HeuristicMatch {
            name: "exact-decode",
            score: SCORE_EXACT_DECODE,
        });
    }
    if endpoint_shape(data) {
        matched.push(HeuristicMatch {
            name: "endpoint-shape",
            score: SCORE_ENDPOINT_SHAPE,
        });
    }
    if header_shape(data) {
        matched.push(HeuristicMatch {
            name: "channel-header-shape",
            score: SCORE_HEADER_SHAPE,
        });
    }
    if ascii_locator(data) {
        matched.push(HeuristicMatch {
            name: "ascii-locator",
            score: SCORE_ASCII_LOCATOR,
        });
    }
    let score = matched.iter().map(|m| m.score).sum::<f64>().min(1.0);
    (!matched.is_empty() && score >= policy.threshold).then_some(DetectionReport {
        txid: None,
        vout: None,
        matched_heuristics: matched,
        decoded_endpoint,
        score,
    })
}

/// Every flagged OP_RETURN output of a non-coinbase transaction.
pub fn detect_tx(tx: &Transaction, policy: &DetectionPolicy) -> (Vec<DetectionReport>, usize) {
    let scan = extract_op_returns(tx);
    let txid = tx.txid();
    let reports = scan
        .outputs
        .iter()
        .filter_map(|o| {
            detect(&o.data, policy).map(|mut r| {
                r.txid = Some(txid);
                r.vout = Some(o.vout);
                r
            })
        })
        .collect();
    (reports, scan.malformed.len())
}

/// Returns the reports and the number of malformed OP_RETURN pushes.
pub fn detect_block(block: &Block, policy: &DetectionPolicy) -> (Vec<DetectionReport>, usize) {
    let mut reports = Vec::new();
    let mut malformed = 0;
    for tx in block.transactions.iter().skip(1) {
        let (r, m) = detect_tx(tx, policy);
        reports.extend(r);
        malformed += m;
    }
    (reports, malformed)
}

fn exact_decode(data: &[u8], policy: &DetectionPolicy) -> Option<Endpoint> {
    let keys = std::iter::once(None).chain(policy.keys.iter().map(|k| Some(k.as_slice())));
    for key in keys {
        for tag in &policy.tags {
            if let Ok(Decoded::Endpoint(ep)) = PayloadCodec::new(*tag).decode_payload(data, key) {
                return Some(ep);
            }
        }
    }
    None
}

fn routable_v4(ip: Ipv4Addr) -> bool {
    let o = ip.octets();
    !(o[0] == 0 || ip.is_loopback() || ip.is_link_local() || ip.is_multicast() || o[0] >= 240)
}

fn endpoint_shape(data: &[u8]) -> bool {
    let binary = data.windows(6).any(|w| {
        let port = u16::from_be_bytes([w[4], w[5]]);
        port >= 1024 && routable_v4(Ipv4Addr::new(w[0], w[1], w[2], w[3]))
    });
    binary || text_endpoint(data)
}

fn text_endpoint(data: &[u8]) -> bool {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| {
        Regex::new(r"(\d{1,3})\.(\d{1,3})\.(\d{1,3})\.(\d{1,3}):(\d{1,5})").unwrap()
    });
    let text = String::from_utf8_lossy(data);
    re.captures_iter(&text).any(|c| {
        let octets: Option<Vec<u8>> = (1..=4).map(|i| c[i].parse().ok()).collect();
        let port: Option<u16> = c[5].parse().ok();
        match (octets, port) {
            (Some(o), Some(p)) => p >= 1024 && routable_v4(Ipv4Addr::new(o[0], o[1], o[2], o[3])),
            _ => false,
        }
    })
}

/// A version-1 header with only known flag bits, any tag, and a consistent
/// fragment header if the fragment bit is set.
fn header_shape(data: &[u8]) -> bool {
    if data.len() < PREFIX_LEN + 1 || data[2] != PAYLOAD_VERSION || data[3] > 3 {
        return false;
    }
    if data[3] & FLAG_FRAGMENT == 0 {
        return true;
    }
    let body = &data[PREFIX_LEN..];
    body.len() >= FRAGMENT_HEADER_LEN && body[5] >= 1 && body[4] < body[5]
}

fn ascii_locator(data: &[u8]) -> bool {
    if data.len() < 4 {
        return false;
    }
    let printable = data.iter().filter(|b| (0x20..0x7f).contains(*b)).count();
    if printable * 10 < data.len() * 9 {
        return false;
    }
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| {
        Regex::new(concat!(
            r"(?i)[a-z][a-z0-9+.\-]*://[^\s]+",
            r"|[a-z0-9\-.\[\]:]+:\d{2,5}\b",
            r"|\b(?:[a-z0-9\-]+\.)+(?:com|net|org|io|onion|info|biz|xyz|ru|cn|top)\b",
        ))
        .unwrap()
    });
    re.is_match(&String::from_utf8_lossy(data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rendezvous::encode_endpoint;

    fn names(r: &DetectionReport) -> Vec<&'static str> {
        r.matched_heuristics.iter().map(|m| m.name).collect()
    }

    #[test]
    fn own_plain_payload_scores_one() {
        let ep: Endpoint = "10.0.0.103:9999".parse().unwrap();
        let p = encode_endpoint(&ep, None).unwrap().remove(0);
        let r = detect(&p, &DetectionPolicy::default()).unwrap();
        assert_eq!(r.score, 1.0);
        assert_eq!(r.decoded_endpoint, Some(ep));
        assert_eq!(names(&r)[0], "exact-decode");
    }

    #[test]
    fn ascii_url() {
        let r = detect(b"tcp://10.0.0.103:9999", &DetectionPolicy::default()).unwrap();
        assert_eq!(names(&r), vec!["endpoint-shape", "ascii-locator"]);
        assert!((r.score - 0.7).abs() < 1e-9);
        assert!(r.decoded_endpoint.is_none());
    }

    #[test]
    fn quiet_on_plain_text_and_zeros() {
        let policy = DetectionPolicy::default();
        assert!(detect(b"hello world, nothing here", &policy).is_none());
        assert!(detect(&[0u8; 80], &policy).is_none());
        assert!(detect(&[], &policy).is_none());
    }

    #[test]
    fn unknown_key_payload_hits_shape_heuristics() {
        let ep: Endpoint = "10.0.0.103:9999".parse().unwrap();
        let p = encode_endpoint(&ep, Some(&[3u8; 32])).unwrap().remove(0);
        let r = detect(&p, &DetectionPolicy::default());
        if let Some(r) = r {
            assert!(names(&r).contains(&"channel-header-shape"));
            assert!(r.decoded_endpoint.is_none());
        }
        let keyed = DetectionPolicy {
            keys: vec![vec![3u8; 32]],
            ..Default::default()
        };
        assert_eq!(detect(&p, &keyed).unwrap().decoded_endpoint, Some(ep));
    }
}
