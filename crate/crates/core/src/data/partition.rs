use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionMode {
    Iid,
    /// Label-sorted shards dealt out at random, `shards_per_client` each.
    NonIidShards {
        shards_per_client: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PartitionPlan {
    pub client_count: usize,
    pub mode: PartitionMode,
    pub seed: u64,
}

/// Splits sample indices `0..labels.len()` across clients. Each client's
/// indices come back in ascending order.
pub fn partition_indices(labels: &[usize], plan: &PartitionPlan) -> Result<Vec<Vec<usize>>> {
    let n = labels.len();
    let clients = plan.client_count;
    if clients == 0 {
        return Err(Error::InvalidPartition("client_count must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let mut parts: Vec<Vec<usize>> = match plan.mode {
        PartitionMode::Iid => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let (base, extra) = (n / clients, n % clients);
            let mut start = 0;
            (0..clients)
                .map(|c| {
                    let len = base + usize::from(c < extra);
                    let part = order[start..start + len].to_vec();
                    start += len;
                    part
                })
                .collect()
        }
        PartitionMode::NonIidShards { shards_per_client } => {
            if shards_per_client == 0 {
                return Err(Error::InvalidPartition(
                    "shards_per_client must be >= 1".into(),
                ));
            }
            let mut by_label: Vec<usize> = (0..n).collect();
            by_label.sort_by_key(|&i| (labels[i], i));
            let shards = clients * shards_per_client;
            let bounds: Vec<usize> = (0..=shards).map(|s| s * n / shards).collect();
            let mut shard_ids: Vec<usize> = (0..shards).collect();
            shard_ids.shuffle(&mut rng);
            shard_ids
                .chunks(shards_per_client)
                .map(|owned| {
                    owned
                        .iter()
                        .flat_map(|&s| by_label[bounds[s]..bounds[s + 1]].iter().copied())
                        .collect()
                })
                .collect()
        }
    };
    for (client, part) in parts.iter_mut().enumerate() {
        if part.is_empty() {
            return Err(Error::EmptyClient { client });
        }
        part.sort_unstable();
    }
    Ok(parts)
}

/// Per-client datasets for `plan`; see [`partition_indices`].
pub fn partition(dataset: &Dataset, plan: &PartitionPlan) -> Result<Vec<Dataset>> {
    Ok(partition_indices(dataset.labels(), plan)?
        .iter()
        .map(|idx| dataset.subset(idx))
        .collect())
}
