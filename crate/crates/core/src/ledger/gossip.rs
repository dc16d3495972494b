use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GossipNetwork {
    pub nodes: usize,
    pub fanout: usize,
    /// Fixed part of each hop's link latency.
    pub hop_latency_ms: f64,
    /// Each link adds a uniform draw from `[0, jitter_ms)`.
    pub jitter_ms: f64,
    pub seed: u64,
    /// Simulation gives up with an error after this many hops.
    pub max_hops: usize,
}

impl GossipNetwork {
    pub fn new(nodes: usize, fanout: usize, seed: u64) -> Self {
        Self {
            nodes,
            fanout,
            hop_latency_ms: 5.0,
            jitter_ms: 5.0,
            seed,
            max_hops: 1000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes == 0 {
            return Err(Error::InvalidNetwork("node count must be >= 1".into()));
        }
        if self.fanout == 0 {
            return Err(Error::InvalidNetwork("fanout must be >= 1".into()));
        }
        let lat_ok = |v: f64| v.is_finite() && v >= 0.0;
        if !lat_ok(self.hop_latency_ms) || !lat_ok(self.jitter_ms) {
            return Err(Error::InvalidNetwork(format!(
                "latencies must be finite and >= 0, got {} and {}",
                self.hop_latency_ms, self.jitter_ms
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GossipOutcome {
    /// Synchronous hops until every node was informed.
    pub hops: usize,
    /// Simulated arrival time at each node; the origin is 0.
    pub receive_ms: Vec<f64>,
}

impl GossipOutcome {
    /// Time at which the last node was informed.
    pub fn completion_ms(&self) -> f64 {
        self.receive_ms.iter().copied().fold(0.0, f64::max)
    }
}

/// Push gossip from `origin`: every hop, each informed node sends to
/// `fanout` distinct uniformly random peers.
pub fn gossip_broadcast(net: &GossipNetwork, origin: usize) -> Result<GossipOutcome> {
    net.validate()?;
    let n = net.nodes;
    if origin >= n {
        return Err(Error::InvalidNetwork(format!(
            "origin {origin} outside 0..{n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(net.seed);
    let mut receive: Vec<Option<f64>> = vec![None; n];
    receive[origin] = Some(0.0);
    let mut informed = 1;
    let mut hops = 0;
    let per_node = net.fanout.min(n - 1);
    while informed < n {
        if hops == net.max_hops {
            return Err(Error::GossipStalled {
                hops,
                informed,
                nodes: n,
            });
        }
        hops += 1;
        let senders: Vec<(usize, f64)> = receive
            .iter()
            .enumerate()
            .filter_map(|(i, t)| t.map(|t| (i, t)))
            .collect();
        let mut next = receive.clone();
        for (sender, sent_at) in senders {
            for peer in index::sample(&mut rng, n - 1, per_node) {
                // Skip over the sender to sample among the other nodes.
                let peer = if peer >= sender { peer + 1 } else { peer };
                let arrival = sent_at + net.hop_latency_ms + rng.gen::<f64>() * net.jitter_ms;
                if receive[peer].is_none() {
                    let slot = &mut next[peer];
                    *slot = Some(slot.map_or(arrival, |t| t.min(arrival)));
                }
            }
        }
        informed = next.iter().filter(|t| t.is_some()).count();
        receive = next;
    }
    Ok(GossipOutcome {
        hops,
        receive_ms: receive
            .into_iter()
            .map(|t| t.expect("all informed"))
            .collect(),
    })
}

/// One sender contacting every other node in turn.
pub fn sequential_broadcast_ms(nodes: usize, send_ms: f64) -> f64 {
    nodes.saturating_sub(1) as f64 * send_ms
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_networks() {
        let one = gossip_broadcast(&GossipNetwork::new(1, 3, 0), 0).unwrap();
        assert_eq!(one.hops, 0);
        assert_eq!(one.receive_ms, vec![0.0]);
        let two = gossip_broadcast(&GossipNetwork::new(2, 1, 0), 1).unwrap();
        assert_eq!(two.hops, 1);
        assert_eq!(two.receive_ms[1], 0.0);
        assert!(two.receive_ms[0] >= 5.0 && two.receive_ms[0] < 10.0);
    }

    #[test]
    fn full_coverage_in_logarithmic_hops() {
        let mut hops: Vec<usize> = (0..100)
            .map(|s| {
                gossip_broadcast(&GossipNetwork::new(128, 2, s), 0)
                    .unwrap()
                    .hops
            })
            .collect();
        hops.sort_unstable();
        assert!(hops[50] <= 14, "median {}", hops[50]);
    }

    #[test]
    fn receive_times_grow_with_hops() {
        let net = GossipNetwork {
            jitter_ms: 0.0,
            ..GossipNetwork::new(64, 2, 4)
        };
        let out = gossip_broadcast(&net, 3).unwrap();
        assert!(out.receive_ms.iter().all(|t| t % 5.0 == 0.0));
        assert!(out.completion_ms() <= 5.0 * out.hops as f64);
    }

    #[test]
    fn seeded_and_deterministic() {
        let net = GossipNetwork::new(50, 2, 8);
        assert_eq!(
            gossip_broadcast(&net, 0).unwrap(),
            gossip_broadcast(&net, 0).unwrap()
        );
    }

    #[test]
    fn hop_cap_fails_explicitly() {
        let net = GossipNetwork {
            max_hops: 1,
            ..GossipNetwork::new(1000, 1, 0)
        };
        assert!(matches!(
            gossip_broadcast(&net, 0),
            Err(Error::GossipStalled {
                hops: 1,
                nodes: 1000,
                ..
            })
        ));
    }

    #[test]
    fn invalid_networks_are_rejected() {
        assert!(gossip_broadcast(&GossipNetwork::new(0, 1, 0), 0).is_err());
        assert!(gossip_broadcast(&GossipNetwork::new(4, 0, 0), 0).is_err());
        assert!(gossip_broadcast(&GossipNetwork::new(4, 1, 0), 4).is_err());
    }
}
