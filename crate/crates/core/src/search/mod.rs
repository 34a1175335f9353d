//! Co-processing beam search.
//!
//! Every neighbor evaluation is routed by tier: a mapped vector is scored on
//! the hot path; a miss goes through the cache policy, which either promotes
//! it (transfer, then hot) or leaves it on the cold path. Both paths read the
//! same bytes with the same kernel, so results never depend on cache state.

mod live;
mod pool;

use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use live::LiveSet;
pub use pool::{CandidatePool, PoolEntry};

use crate::cache::{CacheManager, Placement};
use crate::error::{Error, Result};
use crate::graph::VersionedGraph;
use crate::store::TieredStore;

/// Per-query counters.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SearchStats {
    pub hot_hits: u64,
    pub cold_computes: u64,
    pub promotions: u64,
    /// Time units under the cost model.
    pub modeled_cost: f64,
    /// Candidates expanded.
    pub iterations: u64,
    /// Neighbor lists served from a fresh (or, when allowed, stale) hot copy.
    pub hot_list_reads: u64,
    pub latency: Duration,
}

impl SearchStats {
    pub fn evaluations(&self) -> u64 {
        self.hot_hits + self.cold_computes + self.promotions
    }

    /// Fraction of evaluations not served from the hot tier.
    pub fn miss_rate(&self) -> f64 {
        let n = self.evaluations();
        if n == 0 {
            0.0
        } else {
            (self.cold_computes + self.promotions) as f64 / n as f64
        }
    }

    pub fn accumulate(&mut self, other: &SearchStats) {
        self.hot_hits += other.hot_hits;
        self.cold_computes += other.cold_computes;
        self.promotions += other.promotions;
        self.modeled_cost += other.modeled_cost;
        self.iterations += other.iterations;
        self.hot_list_reads += other.hot_list_reads;
        self.latency += other.latency;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutput {
    pub ids: Vec<u32>,
    /// Squared L2 distances, aligned with `ids`.
    pub distances: Vec<f32>,
    pub stats: SearchStats,
}

/// Everything a query reads.
#[derive(Clone, Copy)]
pub struct SearchContext<'a> {
    pub store: &'a TieredStore,
    pub graph: &'a VersionedGraph,
    pub cache: &'a CacheManager,
    pub live: &'a LiveSet,
    /// Test-only: use hot list copies even when their version is stale.
    pub allow_stale_hot: bool,
}

/// SplitMix64 finalizer, used to derive per-query seeds.
pub fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl<'a> SearchContext<'a> {
    /// Scores `h_id` against `query`, routing it through the tiers. `None`
    /// if the vector vanished (reclaimed) meanwhile.
    #[inline]
    fn evaluate(&self, h_id: u32, query: &[f32], stats: &mut SearchStats) -> Option<f32> {
        let cost = self.cache.cost();
        self.cache.record_access(h_id);
        if let Some(d) = self.store.mapping(h_id) {
            if let Some(dist) = self.store.distance_hot(d, h_id, query) {
                self.cache.on_hit(d);
                stats.hot_hits += 1;
                stats.modeled_cost += cost.t_hot;
                return Some(dist);
            }
        }
        let placement = self
            .cache
            .place_on_miss(h_id, self.store, self.graph)
            .unwrap_or(Placement::Cold);
        let (d, promoted) = match placement {
            Placement::Promoted(d) => (Some(d), true),
            Placement::Cached(d) => (Some(d), false),
            Placement::Cold => (None, false),
        };
        if let Some(dist) = d.and_then(|d| self.store.distance_hot(d, h_id, query)) {
            if promoted {
                stats.promotions += 1;
                stats.modeled_cost += cost.t_transfer + cost.t_hot;
            } else {
                stats.hot_hits += 1;
                stats.modeled_cost += cost.t_hot;
            }
            return Some(dist);
        }
        let (dist, _) = self.store.distance_cold(h_id, query).ok()?;
        if promoted {
            // Evicted again before we could read it; the transfer happened.
            stats.promotions += 1;
            stats.modeled_cost += cost.t_transfer;
        }
        stats.cold_computes += 1;
        stats.modeled_cost += cost.t_cold;
        Some(dist)
    }

    /// Fetches the out-neighbors of `h_id`, preferring a fresh hot copy.
    #[inline]
    fn fetch_neighbors(&self, h_id: u32, buf: &mut Vec<u32>, stats: &mut SearchStats) {
        if let Some(d) = self.store.mapping(h_id) {
            if self
                .graph
                .hot_neighbors_into(d, h_id, self.allow_stale_hot, buf)
                .is_some()
            {
                stats.hot_list_reads += 1;
                return;
            }
        }
        if self.graph.neighbors_into(h_id, buf).is_err() {
            buf.clear();
        }
    }

    /// Runs the beam search with pool size `l` and returns the final pool.
    pub fn search_pool(
        &self,
        query: &[f32],
        l: usize,
        seed: u64,
        stats: &mut SearchStats,
    ) -> Result<CandidatePool> {
        if query.len() != self.store.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.store.dim(),
                actual: query.len(),
            });
        }
        let mut pool = CandidatePool::new(l);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for e in self.live.sample(&mut rng, l) {
            if !pool.first_visit(e) || self.store.is_deleted(e) {
                continue;
            }
            if let Some(dist) = self.evaluate(e, query, stats) {
                pool.insert_new(e, dist);
            }
        }
        let mut nbrs = Vec::with_capacity(self.graph.degree());
        while let Some(cur) = pool.next_unvisited() {
            stats.iterations += 1;
            self.fetch_neighbors(cur.id, &mut nbrs, stats);
            for &u in &nbrs {
                if !pool.first_visit(u) || self.store.is_deleted(u) {
                    continue;
                }
                if let Some(dist) = self.evaluate(u, query, stats) {
                    pool.insert_new(u, dist);
                }
            }
        }
        Ok(pool)
    }

    /// Top-`k` search with pool size `l`.
    pub fn search(&self, query: &[f32], k: usize, l: usize, seed: u64) -> Result<SearchOutput> {
        if k > l {
            return Err(Error::InvalidArgument(format!("k = {k} exceeds L = {l}")));
        }
        let start = Instant::now();
        let mut stats = SearchStats::default();
        let pool = self.search_pool(query, l, seed, &mut stats)?;
        let (ids, distances) = pool
            .entries()
            .iter()
            .filter(|e| !self.store.is_deleted(e.id))
            .take(k)
            .map(|e| (e.id, e.dist))
            .unzip();
        stats.latency = start.elapsed();
        Ok(SearchOutput {
            ids,
            distances,
            stats,
        })
    }

    /// Searches every query; query `i` uses seed `mix_seed(seed, first + i)`.
    pub fn search_batch<Q>(
        &self,
        queries: &[Q],
        k: usize,
        l: usize,
        seed: u64,
        first: u64,
    ) -> Result<Vec<SearchOutput>>
    where
        Q: AsRef<[f32]> + Sync,
    {
        queries
            .par_iter()
            .enumerate()
            .map(|(i, q)| self.search(q.as_ref(), k, l, mix_seed(seed, first + i as u64)))
            .collect()
    }
}

/// `|results[..k] ∩ truth[..k]| / k`; missing results count as misses.
pub fn recall_at_k(results: &[u32], truth: &[u32], k: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let truth = &truth[..k.min(truth.len())];
    let hits = results
        .iter()
        .take(k)
        .filter(|r| truth.contains(r))
        .count();
    hits as f64 / k as f64
}

/// Mean recall@k over aligned result and truth lists.
pub fn mean_recall<R: AsRef<[u32]>, T: AsRef<[u32]>>(results: &[R], truth: &[T], k: usize) -> f64 {
    if results.is_empty() {
        return 0.0;
    }
    results
        .iter()
        .zip(truth)
        .map(|(r, t)| recall_at_k(r.as_ref(), t.as_ref(), k))
        .sum::<f64>()
        / results.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recall_examples() {
        assert!((recall_at_k(&[1, 2, 3], &[1, 2, 4], 3) - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(recall_at_k(&[1, 2, 3], &[3, 2, 1], 3), 1.0);
        assert_eq!(recall_at_k(&[1, 2, 3], &[4, 5, 6], 3), 0.0);
        assert_eq!(recall_at_k(&[1], &[1, 2], 2), 0.5);
    }

    #[test]
    fn seeds_differ_per_query() {
        assert_ne!(mix_seed(7, 0), mix_seed(7, 1));
        assert_eq!(mix_seed(7, 3), mix_seed(7, 3));
    }
}
