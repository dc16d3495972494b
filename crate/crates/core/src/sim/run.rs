use std::fmt::Write as _;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{load_idx, partition, read_container, synth_blobs, Dataset};
use crate::error::{Error, Result};
use crate::fedavg;
use crate::fedcurv::{self, Client, GlobalModelState, HyperParams, RoundStats};
use crate::ledger::{
    digest_client_update, digest_fedavg_update, digest_global_state, export_chain,
    measure_latencies, select_proposer, sha256, total_elapsed_ms, validate_chain, Chain, Clock,
    KeyPair, LatencyConfig, SignedTransaction, TxKind,
};
use crate::nn::ModelSpec;
use crate::sim::config::{Algorithm, DatasetSource, ExperimentConfig, ModelKind};
use crate::sim::model_file::write_model;

pub const SCHEMA_VERSION: u32 = 1;
pub const METRICS_HEADER: &str =
    "schema_version,round,global_acc,client_acc_mean,client_acc_min,client_acc_max,divergence,elapsed_ms";

#[derive(Debug, Clone, PartialEq)]
pub struct RoundMetrics {
    /// 1-based.
    pub round: u64,
    pub global_acc: f64,
    pub client_acc_mean: f64,
    pub client_acc_min: f64,
    pub client_acc_max: f64,
    pub divergence: f64,
    pub elapsed_ms: f64,
}

#[derive(Debug)]
pub struct ExperimentReport {
    pub metrics: Vec<RoundMetrics>,
    pub final_state: GlobalModelState,
    pub chain: Option<Chain>,
    pub metrics_path: PathBuf,
    pub model_path: PathBuf,
    pub chain_path: Option<PathBuf>,
}

impl ExperimentReport {
    pub fn final_accuracy(&self) -> f64 {
        self.metrics.last().map_or(f64::NAN, |m| m.global_acc)
    }
}

pub fn metrics_csv(rows: &[RoundMetrics]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for m in rows {
        let _ = writeln!(
            out,
            "{SCHEMA_VERSION},{},{},{},{},{},{},{}",
            m.round,
            m.global_acc,
            m.client_acc_mean,
            m.client_acc_min,
            m.client_acc_max,
            m.divergence,
            m.elapsed_ms
        );
    }
    out
}

/// Training and test splits with a shared class count.
pub fn load_datasets(source: &DatasetSource) -> Result<(Dataset, Dataset)> {
    let (train, test) = match source {
        DatasetSource::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
        } => (
            load_idx(train_images, train_labels)?,
            load_idx(test_images, test_labels)?,
        ),
        DatasetSource::Bfeldata { train, test } => (read_container(train)?, read_container(test)?),
        DatasetSource::Synth {
            classes,
            per_class,
            dim,
            spread,
            seed,
            test_every,
        } => {
            let all = synth_blobs(*classes, *per_class, *dim, *spread, *seed);
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..all.len()).partition(|i| i % test_every == 0);
            (all.subset(&train), all.subset(&test))
        }
    };
    if train.sample_shape() != test.sample_shape() {
        return Err(Error::Config(format!(
            "train samples are {:?} but test samples are {:?}",
            train.sample_shape(),
            test.sample_shape()
        )));
    }
    if test.is_empty() {
        return Err(Error::EmptyDataset("test split is empty".into()));
    }
    let classes = train.class_count().max(test.class_count());
    Ok((
        train.with_class_count(classes)?,
        test.with_class_count(classes)?,
    ))
}

pub fn build_spec(model: &ModelKind, sample_shape: &[usize], classes: usize) -> Result<ModelSpec> {
    match model {
        ModelKind::Mlp { hidden } => ModelSpec::mlp(sample_shape.to_vec(), hidden.clone(), classes),
        ModelKind::Cnn { hidden } => {
            // Flat samples are treated as square single-channel images.
            let shape = match sample_shape {
                [n] => {
                    let side = (*n as f64).sqrt().round() as usize;
                    if side * side != *n {
                        return Err(Error::Config(format!(
                            "cnn needs image-shaped samples, got {n} features"
                        )));
                    }
                    vec![1, side, side]
                }
                [h, w] => vec![1, *h, *w],
                other => other.to_vec(),
            };
            ModelSpec::cnn(shape, *hidden, classes)
        }
    }
}

/// Seed for a derived signing key, separated by role and index.
fn key_seed(seed: u64, role: &str, index: u64) -> u64 {
    let mut bytes = role.as_bytes().to_vec();
    bytes.extend_from_slice(&seed.to_le_bytes());
    bytes.extend_from_slice(&index.to_le_bytes());
    u64::from_le_bytes(sha256(&bytes)[..8].try_into().expect("8 bytes"))
}

fn summarize(round: u64, stats: &RoundStats, elapsed_ms: f64) -> RoundMetrics {
    let acc = &stats.client_accuracy;
    let min = acc.iter().copied().fold(f64::INFINITY, f64::min);
    let max = acc.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // Summation rounding must not push the mean outside [min, max].
    let mean = (acc.iter().sum::<f64>() / acc.len() as f64).clamp(min, max);
    RoundMetrics {
        round,
        global_acc: stats.global_accuracy.unwrap_or(f64::NAN),
        client_acc_mean: mean,
        client_acc_min: min,
        client_acc_max: max,
        divergence: stats.divergence,
        elapsed_ms,
    }
}

struct Ledger {
    chain: Chain,
    managers: Vec<KeyPair>,
    stakes: Vec<f64>,
    seed: u64,
}

impl Ledger {
    fn new(cfg: &ExperimentConfig) -> Self {
        Self {
            chain: Chain::new(),
            managers: (0..cfg.stakes.len() as u64)
                .map(|i| crate::ledger::keygen(key_seed(cfg.seed, "manager", i)))
                .collect(),
            stakes: cfg.stakes.clone(),
            seed: cfg.seed,
        }
    }

    /// Appends one block: every client digest, signed by its client, then
    /// the new global model digest, signed by the round's proposer.
    fn record(&mut self, round: u64, clients: &[(u64, [u8; 32])], global: [u8; 32]) -> Result<()> {
        let proposer = &self.managers[select_proposer(&self.stakes, round, self.seed)?];
        let mut txs: Vec<SignedTransaction> = clients
            .iter()
            .map(|(id, digest)| {
                let key = crate::ledger::keygen(key_seed(self.seed, "client", *id));
                SignedTransaction::sign(TxKind::ClientUpdate, round, *digest, &key)
            })
            .collect();
        txs.push(SignedTransaction::sign(
            TxKind::GlobalModel,
            round,
            global,
            proposer,
        ));
        self.chain = self.chain.append_block_at(txs, proposer, round)?;
        Ok(())
    }
}

/// Cost of one round on the simulated clock: the slowest client's training
/// passes, plus committing the round's block when the ledger is on.
fn simulated_round_ms(
    cfg: &ExperimentConfig,
    clients: &[Client],
    sampled: &[u64],
    round: u64,
) -> Result<f64> {
    // The curvature-aware client adds a Fisher pass and a gradient pass.
    let passes = cfg.hyper.local_epochs
        + match cfg.algorithm {
            Algorithm::FedCurv => 2,
            _ => 0,
        };
    let slowest = sampled
        .iter()
        .map(|id| clients[*id as usize].data.len())
        .max()
        .unwrap_or(0);
    let mut ms = (slowest * passes) as f64 * cfg.sim_ms_per_sample;
    if cfg.ledger {
        let latency = LatencyConfig {
            seed: cfg.seed ^ round,
            ..LatencyConfig::default()
        };
        ms += total_elapsed_ms(&measure_latencies(sampled.len() + 1, &latency)?);
    }
    Ok(ms)
}

/// Runs the configured experiment and writes `metrics.csv`, `model.bin` and,
/// with the ledger on, `chain.log` into the output directory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let (train, test) = load_datasets(&cfg.dataset)?;
    let spec = Arc::new(build_spec(
        &cfg.model,
        train.sample_shape(),
        train.class_count(),
    )?);
    let (train, test) = if spec.input_shape() == train.sample_shape() {
        (train, test)
    } else {
        (
            train.with_sample_shape(spec.input_shape())?,
            test.with_sample_shape(spec.input_shape())?,
        )
    };
    let (clients, hyper) = match cfg.algorithm {
        Algorithm::Base => (
            vec![Client { id: 0, data: train }],
            HyperParams {
                client_fraction: 1.0,
                ..cfg.hyper
            },
        ),
        _ => (
            partition(&train, &cfg.partition)?
                .into_iter()
                .enumerate()
                .map(|(i, data)| Client { id: i as u64, data })
                .collect(),
            cfg.hyper,
        ),
    };
    std::fs::create_dir_all(&cfg.output_dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;

    let mut state = GlobalModelState::new(spec.clone(), spec.init_params(cfg.seed))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut ledger = cfg.ledger.then(|| Ledger::new(cfg));
    let mut metrics = Vec::with_capacity(cfg.rounds);
    let started = Instant::now();
    let mut simulated_ms = 0.0;

    for _ in 0..cfg.rounds {
        let (next, stats, digests) = pool.install(|| -> Result<_> {
            Ok(match cfg.algorithm {
                Algorithm::FedCurv => {
                    let out = fedcurv::run_round(&state, &clients, &hyper, &mut rng, Some(&test))?;
                    let d: Vec<_> = out
                        .updates
                        .iter()
                        .map(|u| (u.client_id, digest_client_update(u)))
                        .collect();
                    (out.state, out.stats, d)
                }
                Algorithm::FedAvg | Algorithm::Base => {
                    let out = fedavg::run_round(&state, &clients, &hyper, &mut rng, Some(&test))?;
                    let d: Vec<_> = out
                        .updates
                        .iter()
                        .map(|u| (u.client_id, digest_fedavg_update(u)))
                        .collect();
                    (out.state, out.stats, d)
                }
            })
        })?;
        let round = next.round;
        if let Some(ledger) = ledger.as_mut() {
            ledger.record(round, &digests, digest_global_state(&next))?;
        }
        let elapsed_ms = match cfg.clock {
            Clock::Simulated => {
                simulated_ms += simulated_round_ms(cfg, &clients, &stats.sampled, round)?;
                simulated_ms
            }
            Clock::Wall => started.elapsed().as_secs_f64() * 1e3,
        };
        metrics.push(summarize(round, &stats, elapsed_ms));
        state = next;
    }

    let metrics_path = cfg.output_dir.join("metrics.csv");
    std::fs::write(&metrics_path, metrics_csv(&metrics))?;
    let model_path = cfg.output_dir.join("model.bin");
    write_model(&model_path, &state.theta_global)?;
    let (chain, chain_path) = match ledger {
        Some(ledger) => {
            let check = validate_chain(&ledger.chain);
            if !check.valid {
                return Err(Error::BlockDecode(format!(
                    "recorded chain failed validation at block {:?}",
                    check.first_invalid
                )));
            }
            let path = cfg.output_dir.join("chain.log");
            std::fs::write(&path, export_chain(&ledger.chain))?;
            (Some(ledger.chain), Some(path))
        }
        None => (None, None),
    };
    Ok(ExperimentReport {
        metrics,
        final_state: state,
        chain,
        metrics_path,
        model_path,
        chain_path,
    })
}
