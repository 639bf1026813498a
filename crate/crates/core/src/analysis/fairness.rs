//! How evenly subscribers of one run are served.

use std::collections::BTreeMap;

use super::stats::{latency_stats, LatencyStats};
use super::AnalysisError;
use crate::model::NodeId;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FairnessReport {
    /// Per subscriber, ordered by node id.
    pub per_subscriber: Vec<(NodeId, LatencyStats)>,
    /// Highest minus lowest per-subscriber mean latency.
    pub spread_ns: u64,
    /// Means never decrease with subscriber index and are not all equal.
    pub staircase: bool,
}

/// Summarizes latencies grouped by subscriber; groups without latencies are ignored.
pub fn fairness(groups: &BTreeMap<NodeId, Vec<u64>>) -> Result<FairnessReport, AnalysisError> {
    let per_subscriber = groups
        .iter()
        .filter(|(_, v)| !v.is_empty())
        .map(|(&id, v)| latency_stats(v).map(|s| (id, s)))
        .collect::<Result<Vec<_>, _>>()?;
    if per_subscriber.len() < 2 {
        return Err(AnalysisError::TooFewSubscribers(per_subscriber.len()));
    }
    let means: Vec<u64> = per_subscriber.iter().map(|(_, s)| s.mean_ns).collect();
    let max = *means.iter().max().expect("non-empty");
    let min = *means.iter().min().expect("non-empty");
    let spread_ns = max - min;
    let staircase = spread_ns > 0 && means.windows(2).all(|w| w[0] <= w[1]);
    Ok(FairnessReport {
        per_subscriber,
        spread_ns,
        staircase,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const US: u64 = 1_000;

    #[test]
    fn spread_of_three_means() {
        let g = BTreeMap::from([
            (1, vec![7_000 * US]),
            (2, vec![7_500 * US]),
            (3, vec![8_000 * US]),
        ]);
        let f = fairness(&g).unwrap();
        assert_eq!(f.spread_ns, 1_000 * US);
        assert!(f.staircase);
    }

    #[test]
    fn identical_subscribers_have_no_spread() {
        let g: BTreeMap<_, _> = (1..5).map(|i| (i, vec![5, 6, 7])).collect();
        let f = fairness(&g).unwrap();
        assert_eq!(f.spread_ns, 0);
        assert!(!f.staircase);
    }

    #[test]
    fn needs_two_subscribers() {
        let g = BTreeMap::from([(1, vec![1]), (2, vec![])]);
        assert_eq!(fairness(&g), Err(AnalysisError::TooFewSubscribers(1)));
    }

    #[test]
    fn unordered_means_are_not_a_staircase() {
        let g = BTreeMap::from([(1, vec![3]), (2, vec![1]), (3, vec![2])]);
        assert!(!fairness(&g).unwrap().staircase);
    }

    #[test]
    fn spread_matches_group_by_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let flat: Vec<(NodeId, u64)> = (0..3000)
            .map(|_| (rng.gen_range(1..32), rng.gen_range(0..5_000_000)))
            .collect();
        let mut g: BTreeMap<NodeId, Vec<u64>> = BTreeMap::new();
        for &(s, l) in &flat {
            g.entry(s).or_default().push(l);
        }
        let f = fairness(&g).unwrap();
        let mut sums = [(0u64, 0u64); 32];
        for &(s, l) in &flat {
            sums[s as usize].0 += l;
            sums[s as usize].1 += 1;
        }
        let means: Vec<u64> = sums[1..]
            .iter()
            .filter(|(_, n)| *n > 0)
            .map(|&(s, n)| (2 * s + n) / (2 * n))
            .collect();
        assert_eq!(
            f.spread_ns,
            means.iter().max().unwrap() - means.iter().min().unwrap()
        );
    }
}
