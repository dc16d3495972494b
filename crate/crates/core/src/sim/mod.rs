//! Experiment orchestration: configuration, the round loop, ledger logging
//! and metrics output.

mod config;
mod model_file;
mod run;

pub use crate::eval::accuracy as evaluate;
pub use config::{
    load_config, parse_config, Algorithm, DatasetSource, ExperimentConfig, ModelKind,
};
pub use model_file::{
    decode_model, encode_model, read_model, write_model, MODEL_MAGIC, MODEL_VERSION,
};
pub use run::{
    build_spec, load_datasets, metrics_csv, run_experiment, ExperimentReport, RoundMetrics,
    METRICS_HEADER, SCHEMA_VERSION,
};
