//! Line-oriented output. With `--format json` every line on stdout is one
//! JSON object.

use std::io::Write;

use oprv_core::rendezvous::{DetectionReport, Discovery, Endpoint};
use oprv_core::wire::Hash256;
use serde_json::{json, Value};

use crate::args::Format;
use crate::CliError;

pub struct Output<'a> {
    pub out: &'a mut dyn Write,
    pub format: Format,
}

impl Output<'_> {
    fn emit(&mut self, json: Value, text: String) -> Result<(), CliError> {
        let line = match self.format {
            Format::Json => json.to_string(),
            Format::Text => text,
        };
        writeln!(self.out, "{line}")
            .and_then(|_| self.out.flush())
            .map_err(|e| CliError::Source(format!("cannot write output: {e}")))
    }

    pub fn discovery(&mut self, d: &Discovery) -> Result<(), CliError> {
        let json = json!({
            "ip": d.endpoint.ip().to_string(),
            "port": d.endpoint.port(),
            "height": d.height,
            "block_hash": d.block_hash.to_string(),
            "txid": d.txid.to_string(),
            "fragmented": d.fragmented,
        });
        let frag = if d.fragmented { " (fragmented)" } else { "" };
        self.emit(
            json,
            format!(
                "{} at height {} in {}{frag}",
                d.endpoint.socket_addr(),
                d.height,
                d.txid
            ),
        )
    }

    pub fn explorer_discovery(
        &mut self,
        ep: &Endpoint,
        txid: &Hash256,
        vout: u32,
    ) -> Result<(), CliError> {
        let json = json!({
            "ip": ep.ip().to_string(),
            "port": ep.port(),
            "txid": txid.to_string(),
            "vout": vout,
            "source": "explorer",
        });
        self.emit(
            json,
            format!("{} in {txid}:{vout} (explorer)", ep.socket_addr()),
        )
    }

    pub fn detection(&mut self, r: &DetectionReport, height: Option<u32>) -> Result<(), CliError> {
        let mut json = serde_json::to_value(r).expect("report serializes");
        if let Some(h) = height {
            json["height"] = json!(h);
        }
        let names: Vec<&str> = r.matched_heuristics.iter().map(|m| m.name).collect();
        let at = match (r.txid, r.vout) {
            (Some(t), Some(v)) => format!("{t}:{v}"),
            _ => "-".into(),
        };
        let decoded = r
            .decoded_endpoint
            .map(|e| format!(" -> {}", e.socket_addr()))
            .unwrap_or_default();
        let height = height.map(|h| format!("height {h} ")).unwrap_or_default();
        self.emit(
            json,
            format!(
                "{height}{at} score {:.2} [{}]{decoded}",
                r.score,
                names.join(", ")
            ),
        )
    }

    pub fn detect_summary(&mut self, s: &DetectSummary) -> Result<(), CliError> {
        let json = json!({"summary": {
            "blocks": s.blocks,
            "scanned": s.scanned,
            "flagged": s.flagged,
            "malformed": s.malformed,
        }});
        self.emit(
            json,
            format!(
                "scanned {} OP_RETURN outputs in {} blocks, flagged {}, malformed {}",
                s.scanned, s.blocks, s.flagged, s.malformed
            ),
        )
    }

    pub fn value(&mut self, json: Value, text: String) -> Result<(), CliError> {
        self.emit(json, text)
    }
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct DetectSummary {
    pub blocks: usize,
    pub scanned: usize,
    pub flagged: usize,
    pub malformed: usize,
}
