//! Flat `key = value` experiment configuration. `#` starts a comment, blank
//! lines are ignored, unknown or repeated keys are errors, and relative paths
//! resolve against the config file's directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::data::{PartitionMode, PartitionPlan};
use crate::error::{Error, Result};
use crate::fedcurv::HyperParams;
use crate::ledger::Clock;

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
    },
    Bfeldata {
        train: PathBuf,
        test: PathBuf,
    },
    /// Gaussian blobs; every `test_every`-th sample is held out for testing.
    Synth {
        classes: usize,
        per_class: usize,
        dim: usize,
        spread: f64,
        seed: u64,
        test_every: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelKind {
    Mlp { hidden: Vec<usize> },
    Cnn { hidden: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    FedCurv,
    FedAvg,
    /// Centralized training: one client holding the whole training set.
    Base,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::FedCurv => "fedcurv",
            Algorithm::FedAvg => "fedavg",
            Algorithm::Base => "base",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub model: ModelKind,
    pub algorithm: Algorithm,
    pub partition: PartitionPlan,
    pub hyper: HyperParams,
    pub rounds: usize,
    pub ledger: bool,
    /// Proposer stakes, one per manager node.
    pub stakes: Vec<f64>,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Worker threads for client training; 0 uses every core.
    pub parallelism: usize,
    pub clock: Clock,
    /// Simulated cost of one sample-epoch of local training.
    pub sim_ms_per_sample: f64,
}

impl ExperimentConfig {
    /// Defaults for the given model kind: batch 20 and rate 1e-3 for the
    /// CNN, batch 10 and rate 1e-4 for the MLP.
    pub fn defaults(dataset: DatasetSource, model: ModelKind) -> Self {
        let (batch_size, eta_local) = match model {
            ModelKind::Cnn { .. } => (20, 1e-3),
            ModelKind::Mlp { .. } => (10, 1e-4),
        };
        Self {
            dataset,
            model,
            algorithm: Algorithm::FedCurv,
            partition: PartitionPlan {
                client_count: 10,
                mode: PartitionMode::NonIidShards {
                    shards_per_client: 2,
                },
                seed: 0,
            },
            hyper: HyperParams {
                batch_size,
                eta_local,
                ..HyperParams::default()
            },
            rounds: 20,
            ledger: true,
            stakes: vec![1.0; 4],
            seed: 0,
            output_dir: PathBuf::from("out"),
            parallelism: 0,
            clock: Clock::Simulated,
            sim_ms_per_sample: 0.05,
        }
    }

    /// Checks everything that can be checked without training, including
    /// that referenced files exist.
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::Config("rounds must be >= 1".into()));
        }
        if self.partition.client_count == 0 {
            return Err(Error::Config("clients must be >= 1".into()));
        }
        if let PartitionMode::NonIidShards {
            shards_per_client: 0,
        } = self.partition.mode
        {
            return Err(Error::Config("shards_per_client must be >= 1".into()));
        }
        self.hyper.validate()?;
        if self.stakes.iter().any(|s| !(s.is_finite() && *s >= 0.0))
            || self.stakes.iter().all(|s| *s == 0.0)
        {
            return Err(Error::Config(
                "stakes must be finite, >= 0 and not all zero".into(),
            ));
        }
        if !(self.sim_ms_per_sample.is_finite() && self.sim_ms_per_sample >= 0.0) {
            return Err(Error::Config("sim_ms_per_sample must be >= 0".into()));
        }
        match &self.model {
            ModelKind::Mlp { hidden } if hidden.contains(&0) => {
                return Err(Error::Config("hidden widths must be >= 1".into()))
            }
            ModelKind::Cnn { hidden: 0 } => {
                return Err(Error::Config("hidden width must be >= 1".into()))
            }
            _ => {}
        }
        let files: Vec<&PathBuf> = match &self.dataset {
            DatasetSource::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
            } => vec![train_images, train_labels, test_images, test_labels],
            DatasetSource::Bfeldata { train, test } => vec![train, test],
            DatasetSource::Synth {
                classes,
                per_class,
                dim,
                spread,
                test_every,
                ..
            } => {
                if *classes == 0 || *per_class == 0 || *dim == 0 {
                    return Err(Error::Config("synth counts must be >= 1".into()));
                }
                if !(spread.is_finite() && *spread >= 0.0) {
                    return Err(Error::Config("synth_spread must be >= 0".into()));
                }
                if *test_every < 2 {
                    return Err(Error::Config("synth_test_every must be >= 2".into()));
                }
                vec![]
            }
        };
        if let Some(missing) = files.iter().find(|p| !p.is_file()) {
            return Err(Error::Config(format!(
                "data file {} does not exist",
                missing.display()
            )));
        }
        Ok(())
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_config(&text, base)
}

struct Entries {
    map: BTreeMap<String, (usize, String)>,
    base: PathBuf,
}

impl Entries {
    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.map.remove(key)
    }

    fn parsed<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        self.take(key)
            .map(|(line, v)| {
                v.parse().map_err(|_| {
                    Error::Config(format!("line {line}: invalid value {v:?} for {key}"))
                })
            })
            .transpose()
    }

    fn flag(&mut self, key: &str) -> Result<Option<bool>> {
        self.take(key)
            .map(|(line, v)| match v.as_str() {
                "on" | "true" | "yes" | "1" => Ok(true),
                "off" | "false" | "no" | "0" => Ok(false),
                _ => Err(Error::Config(format!(
                    "line {line}: {key} must be on or off, got {v:?}"
                ))),
            })
            .transpose()
    }

    fn path(&mut self, key: &str) -> Result<PathBuf> {
        let (_, v) = self
            .take(key)
            .ok_or_else(|| Error::Config(format!("missing key {key}")))?;
        Ok(self.base.join(v))
    }

    fn list<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>> {
        self.take(key)
            .map(|(line, v)| {
                v.split(',')
                    .map(|s| {
                        s.trim().parse().map_err(|_| {
                            Error::Config(format!("line {line}: invalid list {v:?} for {key}"))
                        })
                    })
                    .collect()
            })
            .transpose()
    }

    fn choice(&mut self, key: &str, options: &[&str]) -> Result<Option<String>> {
        match self.take(key) {
            Some((_, v)) if options.contains(&v.as_str()) => Ok(Some(v)),
            Some((line, v)) => Err(Error::Config(format!(
                "line {line}: {key} must be one of {}, got {v:?}",
                options.join("|")
            ))),
            None => Ok(None),
        }
    }
}

/// Parses config text; relative paths resolve against `base`.
pub fn parse_config(text: &str, base: &Path) -> Result<ExperimentConfig> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {line}: expected key = value")))?;
        let (key, value) = (key.trim().to_ascii_lowercase(), value.trim().to_string());
        if key.is_empty() {
            return Err(Error::Config(format!("line {line}: empty key")));
        }
        if map.insert(key.clone(), (line, value)).is_some() {
            return Err(Error::Config(format!("line {line}: duplicate key {key}")));
        }
    }
    let mut e = Entries {
        map,
        base: base.to_path_buf(),
    };
    let seed = e.parsed("seed")?.unwrap_or(0);

    let dataset = match e
        .choice("dataset", &["idx", "bfeldata", "synth"])?
        .as_deref()
    {
        Some("idx") => DatasetSource::Idx {
            train_images: e.path("train_images")?,
            train_labels: e.path("train_labels")?,
            test_images: e.path("test_images")?,
            test_labels: e.path("test_labels")?,
        },
        Some("bfeldata") => DatasetSource::Bfeldata {
            train: e.path("train_data")?,
            test: e.path("test_data")?,
        },
        Some(_) => DatasetSource::Synth {
            classes: e.parsed("synth_classes")?.unwrap_or(2),
            per_class: e.parsed("synth_per_class")?.unwrap_or(150),
            dim: e.parsed("synth_dim")?.unwrap_or(2),
            spread: e.parsed("synth_spread")?.unwrap_or(0.3),
            seed: e.parsed("synth_seed")?.unwrap_or(seed),
            test_every: e.parsed("synth_test_every")?.unwrap_or(3),
        },
        None => return Err(Error::Config("missing key dataset".into())),
    };

    let model = match e.choice("model", &["mlp", "cnn"])?.as_deref() {
        Some("cnn") => ModelKind::Cnn {
            hidden: e.parsed("hidden")?.unwrap_or(64),
        },
        _ => ModelKind::Mlp {
            hidden: e.list("hidden")?.unwrap_or_else(|| vec![64]),
        },
    };
    let mut cfg = ExperimentConfig::defaults(dataset, model);
    cfg.seed = seed;
    cfg.partition.seed = seed;

    if let Some(a) = e.choice("algorithm", &["fedcurv", "fedavg", "base"])? {
        cfg.algorithm = match a.as_str() {
            "fedavg" => Algorithm::FedAvg,
            "base" => Algorithm::Base,
            _ => Algorithm::FedCurv,
        };
    }
    if let Some(n) = e.parsed("clients")? {
        cfg.partition.client_count = n;
    }
    let shards = e.parsed("shards_per_client")?.unwrap_or(2);
    cfg.partition.mode = match e.choice("partition", &["iid", "noniid_shards"])?.as_deref() {
        Some("iid") => PartitionMode::Iid,
        _ => PartitionMode::NonIidShards {
            shards_per_client: shards,
        },
    };

    let hp = &mut cfg.hyper;
    if let Some(v) = e.parsed("lambda")? {
        hp.lambda = v;
    }
    if let Some(v) = e.parsed("local_epochs")? {
        hp.local_epochs = v;
    }
    match (e.parsed("eta_local")?, e.parsed("initial_lr")?) {
        (Some(_), Some(_)) => {
            return Err(Error::Config(
                "initial_lr is an alias of eta_local; set only one".into(),
            ))
        }
        (Some(v), None) | (None, Some(v)) => hp.eta_local = v,
        (None, None) => {}
    }
    if let Some(v) = e.parsed("eta_global")? {
        hp.eta_global = v;
    }
    if let Some(v) = e.parsed("epsilon")? {
        hp.epsilon = v;
    }
    if let Some(v) = e.parsed("batch_size")? {
        hp.batch_size = v;
    }
    if let Some(v) = e.parsed("client_fraction")? {
        hp.client_fraction = v;
    }
    if let Some(v) = e.flag("lr_decay")? {
        hp.lr_decay = v;
    }
    if let Some(v) = e.flag("global_lr_decay")? {
        hp.global_lr_decay = v;
    }

    if let Some(v) = e.parsed("rounds")? {
        cfg.rounds = v;
    }
    if let Some(v) = e.flag("ledger")? {
        cfg.ledger = v;
    }
    if let Some(v) = e.list("stakes")? {
        cfg.stakes = v;
    }
    if let Some((_, v)) = e.take("output_dir") {
        cfg.output_dir = e.base.join(v);
    }
    if let Some(v) = e.parsed("parallelism")? {
        cfg.parallelism = v;
    }
    if let Some(c) = e.choice("clock", &["simulated", "wall"])? {
        cfg.clock = if c == "wall" {
            Clock::Wall
        } else {
            Clock::Simulated
        };
    }
    if let Some(v) = e.parsed("sim_ms_per_sample")? {
        cfg.sim_ms_per_sample = v;
    }

    if let Some((key, (line, _))) = e.map.into_iter().next() {
        return Err(Error::Config(format!("line {line}: unknown key {key}")));
    }
    cfg.validate()?;
    Ok(cfg)
}
