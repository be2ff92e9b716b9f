//! A scripted full node that speaks the real wire format, for exercising the
//! read path without a network or a real node.
//!
//! No proof of work is produced or checked; header `bits` and `nonce` are
//! constants.

mod builder;
mod rpc;
mod script;
mod server;

pub use builder::{build_chain, op_return_tx, tx_with_output, TestBlockBuilder, SIM_BITS};
pub use rpc::{MockExplorer, MockRpcConfig, MockRpcNode, MockUtxo};
pub use script::{
    Fault, FaultKind, RequestMatcher, Scenario, ScenarioBlock, ScenarioError, ScenarioTx, SimScript,
};
pub use server::{ConnectionId, Direction, SimConnector, SimError, SimServer, TranscriptEntry};
