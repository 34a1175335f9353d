//! Deleted-neighbor spread: after marking a random
//! fraction of vertices deleted, how much of each surviving vertex's
//! neighbor list is gone.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use tierann::graph::VersionedGraph;

/// Bucket bounds on the deleted-neighbor fraction: `[0, 0.1)`,
/// `[0.1, 0.4)` and `[0.4, 1]`.
pub const BUCKETS: [(f64, f64); 3] = [(0.0, 0.1), (0.1, 0.4), (0.4, 1.0)];

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SpreadHistogram {
    /// Live vertices per bucket.
    pub counts: [usize; 3],
    pub deleted: usize,
    pub live: usize,
}

fn bucket(fraction: f64) -> usize {
    if fraction < BUCKETS[0].1 {
        0
    } else if fraction < BUCKETS[1].1 {
        1
    } else {
        2
    }
}

/// Buckets live vertices of `lists` (host id `i + 1` owns `lists[i]`) by the
/// fraction of their neighbors in `deleted` (indexed by host id). A vertex
/// with an empty list lands in the first bucket.
pub fn histogram(lists: &[Vec<u32>], deleted: &[bool]) -> SpreadHistogram {
    let mut h = SpreadHistogram::default();
    for (i, list) in lists.iter().enumerate() {
        if deleted[i + 1] {
            h.deleted += 1;
            continue;
        }
        h.live += 1;
        let gone = list.iter().filter(|&&u| deleted[u as usize]).count();
        let fraction = if list.is_empty() {
            0.0
        } else {
            gone as f64 / list.len() as f64
        };
        h.counts[bucket(fraction)] += 1;
    }
    h
}

/// Marks `round(fraction · N)` uniformly chosen vertices of `lists` deleted
/// (marks only; the lists are untouched) and buckets the rest.
pub fn measure_lists(lists: &[Vec<u32>], fraction: f64, seed: u64) -> SpreadHistogram {
    let n = lists.len();
    let kill = ((fraction.clamp(0.0, 1.0)) * n as f64).round() as usize;
    let mut deleted = vec![false; n + 1];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in sample(&mut rng, n, kill) {
        deleted[i + 1] = true;
    }
    histogram(lists, &deleted)
}

/// [`measure_lists`] over every vertex of `graph`, with host ids `1..=N`.
pub fn measure_deletion_spread(
    graph: &VersionedGraph,
    fraction: f64,
    seed: u64,
) -> SpreadHistogram {
    let snap = graph.snapshot(graph.capacity() as u32);
    let n = snap.present.iter().rposition(|&p| p).unwrap_or(0);
    measure_lists(&snap.lists[1..=n], fraction, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::uniform;
    use tierann::graph::{build_lists, BuildParams};

    fn ring(n: u32) -> Vec<Vec<u32>> {
        (1..=n)
            .map(|h| vec![h % n + 1, (h + n - 2) % n + 1])
            .collect()
    }

    #[test]
    fn bucket_edges() {
        assert_eq!(bucket(0.0), 0);
        assert_eq!(bucket(0.099), 0);
        assert_eq!(bucket(0.1), 1);
        assert_eq!(bucket(0.399), 1);
        assert_eq!(bucket(0.4), 2);
        assert_eq!(bucket(1.0), 2);
    }

    #[test]
    fn explicit_histogram() {
        // Ring 1-2-3-4-5: deleting 2 leaves 1 and 3 at 50%, 4 and 5 at 0%.
        let mut deleted = vec![false; 6];
        deleted[2] = true;
        let h = histogram(&ring(5), &deleted);
        assert_eq!(
            h,
            SpreadHistogram {
                counts: [2, 0, 2],
                deleted: 1,
                live: 4
            }
        );
    }

    #[test]
    fn extreme_fractions() {
        let lists = ring(50);
        let none = measure_lists(&lists, 0.0, 1);
        assert_eq!(none.counts, [50, 0, 0]);
        let all = measure_lists(&lists, 1.0, 1);
        assert_eq!(all.live, 0);
        assert_eq!(all.counts, [0, 0, 0]);
    }

    #[test]
    fn knng_spreads_deletions() {
        let data = uniform(3000, 8, 4);
        let params = BuildParams {
            degree: 8,
            partition_size: 4096,
            ..BuildParams::default()
        };
        let lists = build_lists(&data, &params).unwrap();
        let h = measure_lists(&lists, 0.1, 9);
        assert_eq!(h.deleted, 300);
        assert_eq!(h.counts.iter().sum::<usize>(), 2700);
        assert!(h.counts[1] > 0 && h.counts[2] > 0, "{h:?}");
    }
}
