//! OP_RETURN rendezvous toolkit.
//!
//! Endpoints are published as OP_RETURN data through a full node's JSON-RPC
//! interface and discovered by a light P2P client that fetches and parses
//! blocks straight from full nodes. A detector flags the same channel, and a
//! scripted mock full node makes the read path testable offline.

pub mod peer;
pub mod publisher;
pub mod rendezvous;
pub mod simnet;
pub mod wire;
