//! Request latency decomposition for the ledger under concurrent load.
//!
//! A request is initialised, retrieves its data (TRD), waits for a manager
//! node to verify it (VTR), and is confirmed once the block holding it has
//! reached every node (TCT). End-to-end delay is the sum of the four parts.

use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ledger::chain::{sha256, validate_chain, Chain, SignedTransaction, TxKind};
use crate::ledger::gossip::{gossip_broadcast, sequential_broadcast_ms, GossipNetwork};
use crate::ledger::keys::keygen;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Clock {
    /// Deterministic discrete-event model.
    Simulated,
    /// Times real signing, verification and block appends.
    Wall,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatencyConfig {
    pub clock: Clock,
    pub init_ms: f64,
    pub trd_ms: f64,
    pub trd_jitter_ms: f64,
    /// Manager nodes verifying in parallel, FIFO.
    pub managers: usize,
    pub vtr_service_ms: f64,
    pub block_capacity: usize,
    pub block_interval_ms: f64,
    /// Nodes a block must reach before confirmation.
    pub network_nodes: usize,
    /// Per-recipient send time without gossip.
    pub send_ms: f64,
    /// Fanout when gossip is enabled.
    pub gossip_fanout: Option<usize>,
    pub seed: u64,
}

impl Default for LatencyConfig {
    fn default() -> Self {
        Self {
            clock: Clock::Simulated,
            init_ms: 1.0,
            trd_ms: 4.0,
            trd_jitter_ms: 2.0,
            managers: 2,
            vtr_service_ms: 3.0,
            block_capacity: 10,
            block_interval_ms: 20.0,
            network_nodes: 64,
            send_ms: 2.0,
            gossip_fanout: None,
            seed: 0,
        }
    }
}

impl LatencyConfig {
    fn validate(&self) -> Result<()> {
        let nonneg = [
            ("init_ms", self.init_ms),
            ("trd_ms", self.trd_ms),
            ("trd_jitter_ms", self.trd_jitter_ms),
            ("vtr_service_ms", self.vtr_service_ms),
            ("block_interval_ms", self.block_interval_ms),
            ("send_ms", self.send_ms),
        ];
        if let Some((name, v)) = nonneg.iter().find(|(_, v)| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config(format!(
                "{name} must be finite and >= 0, got {v}"
            )));
        }
        if self.managers == 0 || self.block_capacity == 0 || self.network_nodes == 0 {
            return Err(Error::Config(
                "managers, block_capacity and network_nodes must be >= 1".into(),
            ));
        }
        if self.gossip_fanout == Some(0) {
            return Err(Error::Config("gossip fanout must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RequestLatency {
    pub request_id: usize,
    pub concurrency: usize,
    pub init_ms: f64,
    pub trd_ms: f64,
    pub vtr_ms: f64,
    pub tct_ms: f64,
    pub end_to_end_ms: f64,
}

impl RequestLatency {
    fn new(request_id: usize, concurrency: usize, parts: [f64; 4]) -> Self {
        let [init_ms, trd_ms, vtr_ms, tct_ms] = parts;
        Self {
            request_id,
            concurrency,
            init_ms,
            trd_ms,
            vtr_ms,
            tct_ms,
            end_to_end_ms: init_ms + trd_ms + vtr_ms + tct_ms,
        }
    }
}

/// Latencies for `concurrency` requests issued together at time zero.
pub fn measure_latencies(
    concurrency: usize,
    config: &LatencyConfig,
) -> Result<Vec<RequestLatency>> {
    if concurrency == 0 {
        return Err(Error::Config("concurrency must be >= 1".into()));
    }
    config.validate()?;
    match config.clock {
        Clock::Simulated => Ok(simulate(concurrency, config)),
        Clock::Wall => wall_clock(concurrency, config),
    }
}

/// Time for one block to reach every node.
fn propagation_ms(config: &LatencyConfig, block: u64) -> Result<f64> {
    match config.gossip_fanout {
        None => Ok(sequential_broadcast_ms(
            config.network_nodes,
            config.send_ms,
        )),
        Some(fanout) => {
            let net = GossipNetwork {
                hop_latency_ms: config.send_ms,
                jitter_ms: config.send_ms,
                ..GossipNetwork::new(config.network_nodes, fanout, config.seed ^ block)
            };
            Ok(gossip_broadcast(&net, 0)?.completion_ms())
        }
    }
}

/// Assigns verified requests, in finishing order, to blocks cut every
/// `block_interval_ms` with at most `block_capacity` entries. Returns the
/// cut time of each request's block and its block number.
fn pack_blocks(verified_at: &[f64], config: &LatencyConfig) -> Vec<(f64, u64)> {
    let mut order: Vec<usize> = (0..verified_at.len()).collect();
    order.sort_by(|&a, &b| verified_at[a].total_cmp(&verified_at[b]).then(a.cmp(&b)));
    let mut out = vec![(0.0, 0); verified_at.len()];
    let mut block = 1u64;
    let mut next = order.into_iter().peekable();
    while next.peek().is_some() {
        let cut = block as f64 * config.block_interval_ms;
        let mut taken = 0;
        while taken < config.block_capacity {
            match next.peek() {
                Some(&i) if verified_at[i] <= cut => {
                    out[i] = (cut, block);
                    next.next();
                    taken += 1;
                }
                _ => break,
            }
        }
        block += 1;
    }
    out
}

fn simulate(concurrency: usize, config: &LatencyConfig) -> Vec<RequestLatency> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let trd: Vec<f64> = (0..concurrency)
        .map(|_| config.trd_ms + rng.gen::<f64>() * config.trd_jitter_ms)
        .collect();
    let ready: Vec<f64> = trd.iter().map(|t| config.init_ms + t).collect();

    let mut arrival: Vec<usize> = (0..concurrency).collect();
    arrival.sort_by(|&a, &b| ready[a].total_cmp(&ready[b]).then(a.cmp(&b)));
    let mut free_at = vec![0.0f64; config.managers];
    let mut verified = vec![0.0; concurrency];
    for i in arrival {
        let (m, &t) = free_at
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("at least one manager");
        let done = ready[i].max(t) + config.vtr_service_ms;
        free_at[m] = done;
        verified[i] = done;
    }

    let blocks = pack_blocks(&verified, config);
    let mut propagation = std::collections::HashMap::new();
    (0..concurrency)
        .map(|i| {
            let (cut, block) = blocks[i];
            let p = *propagation
                .entry(block)
                .or_insert_with(|| propagation_ms(config, block).expect("validated network"));
            RequestLatency::new(
                i,
                concurrency,
                [
                    config.init_ms,
                    trd[i],
                    verified[i] - ready[i],
                    cut + p - verified[i],
                ],
            )
        })
        .collect()
}

fn wall_clock(concurrency: usize, config: &LatencyConfig) -> Result<Vec<RequestLatency>> {
    let ms = |from: Instant, to: Instant| (to - from).as_secs_f64() * 1e3;
    let manager = keygen(config.seed);
    let start = Instant::now();
    let clients: Vec<_> = (0..concurrency)
        .map(|i| keygen(config.seed.wrapping_add(1 + i as u64)))
        .collect();
    let initialised = Instant::now();

    let mut payload = vec![0u8; 4096];
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut txs = Vec::with_capacity(concurrency);
    let mut retrieved = Vec::with_capacity(concurrency);
    for (i, key) in clients.iter().enumerate() {
        rng.fill(&mut payload[..]);
        let digest = sha256(&payload);
        txs.push(SignedTransaction::sign(
            TxKind::ClientUpdate,
            i as u64,
            digest,
            key,
        ));
        retrieved.push(Instant::now());
    }
    let mut verified = Vec::with_capacity(concurrency);
    for (i, tx) in txs.iter().enumerate() {
        if !tx.verify() {
            return Err(Error::InvalidTransactionSignature { index: i });
        }
        verified.push(Instant::now());
    }
    let mut chain = Chain::new();
    let mut confirmed = Vec::with_capacity(concurrency);
    for batch in txs.chunks(config.block_capacity) {
        chain = chain.append_block(batch.to_vec(), &manager)?;
        if !validate_chain(&chain).valid {
            return Err(Error::BlockDecode(
                "freshly appended chain failed validation".into(),
            ));
        }
        let block = chain.len() as u64 - 1;
        let done = Instant::now();
        let p = propagation_ms(config, block)?;
        confirmed.extend(batch.iter().map(|_| (done, p)));
    }

    let init = ms(start, initialised);
    Ok((0..concurrency)
        .map(|i| {
            let prev = if i == 0 {
                initialised
            } else {
                retrieved[i - 1]
            };
            let (done, p) = confirmed[i];
            RequestLatency::new(
                i,
                concurrency,
                [
                    init,
                    ms(prev, retrieved[i]),
                    ms(retrieved[i], verified[i]),
                    ms(verified[i], done) + p,
                ],
            )
        })
        .collect())
}

pub const LATENCY_CSV_HEADER: &str = "request_id,T,trd_ms,vtr_ms,tct_ms,end_to_end_ms";

pub fn latency_csv(rows: &[RequestLatency]) -> String {
    let mut out = String::from(LATENCY_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.request_id, r.concurrency, r.trd_ms, r.vtr_ms, r.tct_ms, r.end_to_end_ms
        );
    }
    out
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

pub fn median_end_to_end(rows: &[RequestLatency]) -> f64 {
    median(&mut rows.iter().map(|r| r.end_to_end_ms).collect::<Vec<_>>())
}

/// Time until the last request is confirmed.
pub fn total_elapsed_ms(rows: &[RequestLatency]) -> f64 {
    rows.iter().map(|r| r.end_to_end_ms).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_request_sums_its_parts() {
        let r = measure_latencies(1, &LatencyConfig::default()).unwrap();
        assert_eq!(r.len(), 1);
        let r = r[0];
        assert_eq!(r.end_to_end_ms, r.init_ms + r.trd_ms + r.vtr_ms + r.tct_ms);
        // No queue: verification is just the service time.
        assert_eq!(r.vtr_ms, 3.0);
    }

    #[test]
    fn load_raises_median_delay() {
        let cfg = LatencyConfig::default();
        let lo = median_end_to_end(&measure_latencies(5, &cfg).unwrap());
        let hi = median_end_to_end(&measure_latencies(100, &cfg).unwrap());
        assert!(hi >= lo, "{hi} < {lo}");
    }

    #[test]
    fn gossip_shortens_total_elapsed() {
        let plain = LatencyConfig::default();
        let gossip = LatencyConfig {
            gossip_fanout: Some(3),
            ..plain.clone()
        };
        let a = total_elapsed_ms(&measure_latencies(50, &plain).unwrap());
        let b = total_elapsed_ms(&measure_latencies(50, &gossip).unwrap());
        assert!(b <= a, "gossip {b} vs sequential {a}");
    }

    #[test]
    fn blocks_respect_capacity_and_interval() {
        let cfg = LatencyConfig::default();
        let verified: Vec<f64> = (0..25).map(|_| 1.0).collect();
        let blocks = pack_blocks(&verified, &cfg);
        let per_block = |b| blocks.iter().filter(|x| x.1 == b).count();
        assert_eq!((per_block(1), per_block(2), per_block(3)), (10, 10, 5));
        assert_eq!(blocks[24].0, 60.0);
    }

    #[test]
    fn simulated_runs_are_reproducible() {
        let cfg = LatencyConfig::default();
        let a = latency_csv(&measure_latencies(20, &cfg).unwrap());
        let b = latency_csv(&measure_latencies(20, &cfg).unwrap());
        assert_eq!(a, b);
        assert!(a.starts_with("request_id,T,trd_ms,vtr_ms,tct_ms,end_to_end_ms\n0,20,"));
        assert_eq!(a.lines().count(), 21);
    }

    #[test]
    fn wall_clock_mode_decomposes() {
        let cfg = LatencyConfig {
            clock: Clock::Wall,
            ..LatencyConfig::default()
        };
        let rows = measure_latencies(4, &cfg).unwrap();
        for r in rows {
            assert!(r.trd_ms >= 0.0 && r.vtr_ms >= 0.0 && r.tct_ms >= 0.0);
            assert_eq!(r.end_to_end_ms, r.init_ms + r.trd_ms + r.vtr_ms + r.tct_ms);
        }
    }

    #[test]
    fn invalid_requests_are_rejected() {
        assert!(measure_latencies(0, &LatencyConfig::default()).is_err());
        let bad = LatencyConfig {
            managers: 0,
            ..LatencyConfig::default()
        };
        assert!(measure_latencies(3, &bad).is_err());
    }
}
