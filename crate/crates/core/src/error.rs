use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch at {layer}: expected {expected}, got {actual}")]
    ShapeMismatch {
        layer: String,
        expected: String,
        actual: String,
    },

    #[error("parameter layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("invalid model spec: {0}")]
    InvalidSpec(String),

    #[error("invalid batch: {0}")]
    InvalidBatch(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("no client updates to aggregate")]
    EmptyUpdates,

    #[error("updates from mixed rounds: expected {expected}, found {found} (client {client_id})")]
    MixedRounds {
        expected: u64,
        found: u64,
        client_id: u64,
    },

    #[error("client {0} appears more than once")]
    DuplicateClient(u64),

    #[error("invalid hyperparameter: {0}")]
    InvalidHyperParams(String),

    #[error("bad magic in {what}: expected {expected:#010x}, found {found:#010x}")]
    BadMagic {
        what: String,
        expected: u32,
        found: u32,
    },

    #[error("truncated file {what}: {detail}")]
    Truncated { what: String, detail: String },

    #[error("image/label count mismatch: {images} images, {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    #[error("malformed data: {0}")]
    Malformed(String),

    #[error("client {client} would receive no samples")]
    EmptyClient { client: usize },

    #[error("invalid partition plan: {0}")]
    InvalidPartition(String),

    #[error("transaction {index} has an invalid signature")]
    InvalidTransactionSignature { index: usize },

    #[error("malformed block encoding: {0}")]
    BlockDecode(String),

    #[error("all stakes are zero")]
    ZeroStakes,

    #[error("invalid stake at node {node}: {value}")]
    InvalidStake { node: usize, value: f64 },

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("gossip did not reach full coverage within {hops} hops ({informed}/{nodes} informed)")]
    GossipStalled {
        hops: usize,
        informed: usize,
        nodes: usize,
    },

    #[error("training diverged: non-finite parameters after {0}")]
    Diverged(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// Stable short identifier used in the CLI's one-line error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::LayoutMismatch(_) => "layout_mismatch",
            Error::InvalidSpec(_) => "invalid_spec",
            Error::InvalidBatch(_) => "invalid_batch",
            Error::EmptyDataset(_) => "empty_dataset",
            Error::EmptyUpdates => "empty_updates",
            Error::MixedRounds { .. } => "mixed_rounds",
            Error::DuplicateClient(_) => "duplicate_client",
            Error::InvalidHyperParams(_) => "invalid_hyperparams",
            Error::BadMagic { .. } => "bad_magic",
            Error::Truncated { .. } => "truncated",
            Error::CountMismatch { .. } => "count_mismatch",
            Error::Malformed(_) => "malformed",
            Error::EmptyClient { .. } => "empty_client",
            Error::InvalidPartition(_) => "invalid_partition",
            Error::InvalidTransactionSignature { .. } => "invalid_tx_signature",
            Error::BlockDecode(_) => "block_decode",
            Error::ZeroStakes => "zero_stakes",
            Error::InvalidStake { .. } => "invalid_stake",
            Error::InvalidNetwork(_) => "invalid_network",
            Error::GossipStalled { .. } => "gossip_stalled",
            Error::Diverged(_) => "diverged",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
        }
    }
}
