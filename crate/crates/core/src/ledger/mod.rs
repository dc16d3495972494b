//! Signed, hash-linked record of training rounds.

mod chain;
mod codec;
mod digest;
mod gossip;
mod keys;
mod latency;
mod pos;

pub use chain::{
    export_chain, import_chain, sha256, validate_chain, validate_log, Block, Chain, Hash,
    SignedTransaction, TxKind, Validation,
};
pub use digest::{digest_client_update, digest_fedavg_update, digest_global_state};
pub use gossip::{gossip_broadcast, sequential_broadcast_ms, GossipNetwork, GossipOutcome};
pub use keys::{keygen, verify, KeyPair, PublicKey, Signature, SCHEME};
pub use latency::{
    latency_csv, measure_latencies, median, median_end_to_end, total_elapsed_ms, Clock,
    LatencyConfig, RequestLatency, LATENCY_CSV_HEADER,
};
pub use pos::select_proposer;
