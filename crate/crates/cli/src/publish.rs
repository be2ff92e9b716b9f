use oprv_core::publisher::{craft_and_send, node_network, FeeRate, PublishError, RpcClient};
use oprv_core::rendezvous::{encode_endpoint, Endpoint};
use oprv_core::wire::NetworkId;
use serde_json::json;

use crate::args::PublishArgs;
use crate::config::CliConfig;
use crate::output::Output;
use crate::CliError;

fn same_chain(node: NetworkId, configured: NetworkId) -> bool {
    let norm = |n| {
        if n == NetworkId::Simnet {
            NetworkId::Regtest
        } else {
            n
        }
    };
    norm(node) == norm(configured)
}

fn rpc_error(e: PublishError) -> CliError {
    match e {
        PublishError::EmptyPayload | PublishError::PayloadTooLarge(_) => {
            CliError::Encoding(e.to_string())
        }
        PublishError::InvalidUrl(_) => CliError::Config(e.to_string()),
        other => CliError::Source(other.to_string()),
    }
}

pub fn run(cfg: &CliConfig, args: &PublishArgs, out: &mut Output<'_>) -> Result<(), CliError> {
    let mainnet_ok = args.i_know_this_is_mainnet;
    if cfg.network == NetworkId::Mainnet && !mainnet_ok {
        return Err(CliError::Config(
            "refusing to publish on mainnet without --i-know-this-is-mainnet".into(),
        ));
    }
    let rpc = cfg
        .rpc
        .clone()
        .ok_or_else(|| CliError::Config("publish needs --rpc-url".into()))?;
    let endpoint: Endpoint = args
        .endpoint
        .parse()
        .map_err(|e| CliError::Config(format!("invalid endpoint {:?}: {e}", args.endpoint)))?;
    let key = match (args.encrypt, cfg.key_bytes()) {
        (true, None) => {
            return Err(CliError::Config(
                "--encrypt: key required (--key-hex or RV_KEY)".into(),
            ))
        }
        (true, Some(k)) => Some(k),
        (false, _) => None,
    };
    let payloads =
        encode_endpoint(&endpoint, key).map_err(|e| CliError::Encoding(e.to_string()))?;

    let client = RpcClient::new(rpc);
    match node_network(&client) {
        Ok(Some(NetworkId::Mainnet)) if !mainnet_ok => {
            return Err(CliError::Config(
                "the RPC node is on mainnet; refusing without --i-know-this-is-mainnet".into(),
            ))
        }
        Ok(Some(node)) if !same_chain(node, cfg.network) => {
            return Err(CliError::Config(format!(
                "the RPC node is on {node} but --network is {}",
                cfg.network
            )))
        }
        Ok(Some(_)) => {}
        Ok(None) => log::warn!("the RPC node reports a chain this tool does not know"),
        Err(PublishError::Rpc { code: -32601, .. }) => {
            log::warn!("the RPC node does not report its chain")
        }
        Err(e) => return Err(rpc_error(e)),
    }

    let total = payloads.len();
    for (i, payload) in payloads.iter().enumerate() {
        let receipt =
            craft_and_send(&client, payload, FeeRate(args.fee_rate)).map_err(rpc_error)?;
        let mut json = serde_json::to_value(&receipt).expect("receipt serializes");
        json["chunk"] = json!(i);
        json["chunks"] = json!(total);
        let text = format!(
            "published {endpoint} in {} (fee {} sat)",
            receipt.txid, receipt.fee_paid
        );
        out.value(json, text)?;
    }
    Ok(())
}
