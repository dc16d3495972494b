use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Stake-weighted proposer draw for `round`. Each round reads its own
/// stream of the seeded generator, so draws are independent of call order.
pub fn select_proposer(stakes: &[f64], round: u64, seed: u64) -> Result<usize> {
    if let Some((node, &value)) = stakes
        .iter()
        .enumerate()
        .find(|(_, s)| !(s.is_finite() && **s >= 0.0))
    {
        return Err(Error::InvalidStake { node, value });
    }
    if stakes.iter().all(|s| *s == 0.0) {
        return Err(Error::ZeroStakes);
    }
    let dist = WeightedIndex::new(stakes).map_err(|_| Error::ZeroStakes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(round);
    Ok(dist.sample(&mut rng))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(stakes: &[f64], draws: u64, seed: u64) -> Vec<u64> {
        let mut c = vec![0; stakes.len()];
        for r in 0..draws {
            c[select_proposer(stakes, r, seed).unwrap()] += 1;
        }
        c
    }

    #[test]
    fn single_node_always_wins() {
        assert!((0..50).all(|r| select_proposer(&[2.5], r, 9).unwrap() == 0));
    }

    #[test]
    fn equal_stakes_split_evenly() {
        // 6 sigma of Binomial(10^4, 1/2) is 300.
        let c = counts(&[1.0, 1.0], 10_000, 1);
        assert!(c[0].abs_diff(5000) <= 300, "{c:?}");
    }

    #[test]
    fn stakes_three_to_one() {
        let c = counts(&[3.0, 1.0], 10_000, 2);
        assert!(c[0].abs_diff(7500) <= 300, "{c:?}");
    }

    #[test]
    fn zero_stake_nodes_never_win() {
        let c = counts(&[0.0, 1.0, 0.0], 500, 3);
        assert_eq!(c, vec![0, 500, 0]);
    }

    #[test]
    fn draws_are_seeded_per_round() {
        let s = [1.0, 2.0, 3.0, 4.0];
        let a: Vec<usize> = (0..100)
            .map(|r| select_proposer(&s, r, 7).unwrap())
            .collect();
        let b: Vec<usize> = (0..100)
            .rev()
            .map(|r| select_proposer(&s, r, 7).unwrap())
            .collect();
        assert_eq!(a, b.into_iter().rev().collect::<Vec<_>>());
    }

    #[test]
    fn bad_stakes_are_rejected() {
        assert!(matches!(
            select_proposer(&[0.0, 0.0], 0, 0),
            Err(Error::ZeroStakes)
        ));
        assert!(matches!(select_proposer(&[], 0, 0), Err(Error::ZeroStakes)));
        assert!(matches!(
            select_proposer(&[1.0, -1.0], 0, 0),
            Err(Error::InvalidStake { node: 1, .. })
        ));
        assert!(matches!(
            select_proposer(&[f64::NAN], 0, 0),
            Err(Error::InvalidStake { node: 0, .. })
        ));
    }

    #[test]
    fn chi_squared_fairness() {
        // df = 3; the p = 0.001 critical value is 16.27.
        let stakes = [1.0, 2.0, 3.0, 4.0];
        let n = 10_000u64;
        let c = counts(&stakes, n, 11);
        let total: f64 = stakes.iter().sum();
        let chi2: f64 = c
            .iter()
            .zip(stakes)
            .map(|(&o, s)| {
                let e = n as f64 * s / total;
                (o as f64 - e).powi(2) / e
            })
            .sum();
        assert!(chi2 < 16.27, "chi2 {chi2}");
    }
}
