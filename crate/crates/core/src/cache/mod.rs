//! Workload-aware vector placement (WAVP) and the baseline policies.
//!
//! The manager decides what happens on a hot-tier miss: compute on the cold
//! path, or promote the vector into a hot slot (evicting an occupant when
//! the segment is full). Decisions for one segment are serialized by that
//! segment's mutex; reference bits and predictor counters are atomics so
//! hot hits never block.

mod adapt;
mod baseline;
pub mod clock;
mod cost;
mod predictor;

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};

use parking_lot::Mutex;

pub use adapt::{AdaptParams, ThetaController};
pub use baseline::{BaselineKind, BaselineState};
pub use cost::CostModel;
pub use predictor::{predict_value, Predictor, PredictorParams};

use crate::error::{Error, Result};
use crate::graph::VersionedGraph;
use crate::store::TieredStore;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Policy {
    #[default]
    Wavp,
    Lru,
    Lfu,
    Lrfu,
    /// Never promotes; every miss is computed on the cold path.
    ColdOnly,
}

impl Policy {
    pub const ALL: [Policy; 5] = [
        Policy::Wavp,
        Policy::Lru,
        Policy::Lfu,
        Policy::Lrfu,
        Policy::ColdOnly,
    ];

    fn baseline(self) -> Option<BaselineKind> {
        match self {
            Policy::Lru => Some(BaselineKind::Lru),
            Policy::Lfu => Some(BaselineKind::Lfu),
            Policy::Lrfu => Some(BaselineKind::Lrfu),
            Policy::Wavp | Policy::ColdOnly => None,
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Policy::Wavp => "wavp",
            Policy::Lru => "lru",
            Policy::Lfu => "lfu",
            Policy::Lrfu => "lrfu",
            Policy::ColdOnly => "cold",
        })
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "wavp" => Ok(Policy::Wavp),
            "lru" => Ok(Policy::Lru),
            "lfu" => Ok(Policy::Lfu),
            "lrfu" => Ok(Policy::Lrfu),
            "cold" | "none" | "cold_only" => Ok(Policy::ColdOnly),
            other => Err(Error::Config(format!("unknown cache policy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CacheConfig {
    pub policy: Policy,
    pub predictor: PredictorParams,
    pub cost: CostModel,
    pub theta_adaptive: bool,
    /// Accesses per adaptation window.
    pub adapt_window: u64,
    pub adapt: AdaptParams,
    /// Hot-tier capacity as a fraction of the index capacity.
    pub capacity_fraction: f64,
    /// LRFU decay per tick.
    pub lrfu_lambda: f64,
}

impl Default for CacheConfig {
    fn default() -> Self {
        Self {
            policy: Policy::Wavp,
            predictor: PredictorParams::default(),
            cost: CostModel::default(),
            theta_adaptive: false,
            adapt_window: 10_000,
            adapt: AdaptParams::default(),
            capacity_fraction: 0.2,
            lrfu_lambda: 1e-3,
        }
    }
}

impl CacheConfig {
    pub fn validate(&self) -> Result<()> {
        self.cost.validate()?;
        let p = &self.predictor;
        if !(p.alpha >= 0.0 && p.beta >= 0.0 && p.alpha + p.beta > 0.0) {
            return Err(Error::Config("alpha and beta must be nonnegative with a positive sum".into()));
        }
        if p.window_len == 0 || !(p.decay > 0.0 && p.decay <= 1.0) {
            return Err(Error::Config("window_len must be positive and decay in (0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.capacity_fraction) {
            return Err(Error::Config("capacity_fraction must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Outcome of routing a miss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    /// Compute on the cold path.
    Cold,
    /// Promoted into this slot; compute hot.
    Promoted(u32),
    /// Another thread cached the vector meanwhile.
    Cached(u32),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CacheCounters {
    pub promotions: u64,
    pub evictions: u64,
    pub warmup_promotions: u64,
}

#[derive(Debug)]
struct SegmentState {
    clock: usize,
    baseline: Option<BaselineState>,
}

#[derive(Debug, Default)]
struct Window {
    accesses: u64,
    misses: u64,
    sum_f: f64,
}

#[derive(Debug)]
pub struct CacheManager {
    config: CacheConfig,
    predictor: Predictor,
    refs: Box<[AtomicBool]>,
    segments: Box<[Mutex<SegmentState>]>,
    theta: AtomicU64,
    controller: Mutex<ThetaController>,
    window: Mutex<Window>,
    promotions: AtomicU64,
    evictions: AtomicU64,
    warmup_promotions: AtomicU64,
}

impl CacheManager {
    /// `capacity` bounds host ids; the hot-tier layout comes from `store`.
    pub fn new(config: CacheConfig, capacity: usize, store: &TieredStore) -> Result<Self> {
        config.validate()?;
        let rho = config.cost.rho();
        let segments = (0..store.hot_segments())
            .map(|s| {
                let slots = store.segment_slots(s).len();
                Mutex::new(SegmentState {
                    clock: 0,
                    baseline: config
                        .policy
                        .baseline()
                        .map(|k| BaselineState::new(k, slots, config.lrfu_lambda)),
                })
            })
            .collect();
        Ok(Self {
            predictor: Predictor::new(capacity, config.predictor),
            refs: (0..=store.hot_capacity()).map(|_| AtomicBool::new(false)).collect(),
            segments,
            theta: AtomicU64::new(rho.to_bits()),
            controller: Mutex::new(ThetaController::new(rho, config.adapt)),
            window: Mutex::default(),
            promotions: AtomicU64::new(0),
            evictions: AtomicU64::new(0),
            warmup_promotions: AtomicU64::new(0),
            config,
        })
    }

    pub fn config(&self) -> &CacheConfig {
        &self.config
    }

    pub fn policy(&self) -> Policy {
        self.config.policy
    }

    pub fn cost(&self) -> &CostModel {
        &self.config.cost
    }

    pub fn predictor(&self) -> &Predictor {
        &self.predictor
    }

    pub fn theta(&self) -> f64 {
        f64::from_bits(self.theta.load(Ordering::Acquire))
    }

    pub fn set_theta(&self, theta: f64) {
        self.controller.lock().set_theta(theta);
        self.theta.store(theta.to_bits(), Ordering::Release);
    }

    pub fn counters(&self) -> CacheCounters {
        CacheCounters {
            promotions: self.promotions.load(Ordering::Relaxed),
            evictions: self.evictions.load(Ordering::Relaxed),
            warmup_promotions: self.warmup_promotions.load(Ordering::Relaxed),
        }
    }

    pub fn ref_bit(&self, d_id: u32) -> bool {
        self.refs
            .get(d_id as usize)
            .is_some_and(|r| r.load(Ordering::Acquire))
    }

    pub fn set_ref_bit(&self, d_id: u32, value: bool) {
        if let Some(r) = self.refs.get(d_id as usize) {
            r.store(value, Ordering::Release);
        }
    }

    pub fn clock_hand(&self, seg: usize) -> usize {
        self.segments[seg].lock().clock
    }

    pub fn set_clock_hand(&self, seg: usize, position: usize) {
        self.segments[seg].lock().clock = position;
    }

    #[inline]
    fn local(&self, d_id: u32) -> usize {
        (d_id as usize - 1) / self.segments.len()
    }

    /// `F_lambda(h)` from the current counters and in-degree.
    #[inline]
    pub fn predict(&self, h_id: u32, graph: &VersionedGraph) -> f64 {
        self.predictor.predict(h_id, graph.in_degree(h_id))
    }

    /// Counts one access to `h_id` for the predictor and the adaptation
    /// window.
    #[inline]
    pub fn record_access(&self, h_id: u32) {
        self.predictor.record(h_id);
        if self.config.theta_adaptive {
            self.window.lock().accesses += 1;
        }
    }

    /// Records a hot hit on slot `d_id`.
    #[inline]
    pub fn on_hit(&self, d_id: u32) {
        if let Some(r) = self.refs.get(d_id as usize) {
            r.store(true, Ordering::Release);
        }
        if self.config.policy.baseline().is_some() && !self.segments.is_empty() {
            let seg = (d_id as usize - 1) % self.segments.len();
            let local = self.local(d_id);
            if let Some(b) = self.segments[seg].lock().baseline.as_mut() {
                b.on_hit(local);
            }
        }
    }

    /// Routes a miss on `h_id` (gain test and clock sweep for WAVP; fetch-on-miss for the
    /// baselines).
    pub fn place_on_miss(
        &self,
        h_id: u32,
        store: &TieredStore,
        graph: &VersionedGraph,
    ) -> Result<Placement> {
        if self.config.policy == Policy::ColdOnly || self.segments.is_empty() {
            return Ok(Placement::Cold);
        }
        if self.config.policy == Policy::Wavp {
            let f = self.predict(h_id, graph);
            if self.config.theta_adaptive {
                let mut w = self.window.lock();
                w.misses += 1;
                w.sum_f += f;
            }
            if f <= self.theta() {
                return Ok(Placement::Cold);
            }
        }
        let seg = store.segment_of_vector(h_id);
        let mut state = self.segments[seg].lock();
        if let Some(d) = store.mapping(h_id) {
            return Ok(Placement::Cached(d));
        }
        let d_id = match store.free_slot(seg) {
            Some(d) => {
                store.promote(h_id, d)?;
                d
            }
            None => {
                if store.segment_len(seg) == 0 {
                    return Ok(Placement::Cold);
                }
                let victim = match state.baseline.as_mut() {
                    // Baselines keep their own order; no per-slot scan.
                    Some(b) => {
                        let v = b.victim().unwrap_or(0);
                        b.on_remove(v);
                        v
                    }
                    None => {
                        let slots = store.segment_slots(seg);
                        let predicts: Vec<f64> = slots
                            .iter()
                            .map(|&(_, h)| h.map_or(f64::NEG_INFINITY, |h| self.predict(h, graph)))
                            .collect();
                        let refs: Vec<&AtomicBool> =
                            slots.iter().map(|&(d, _)| &self.refs[d as usize]).collect();
                        let (victim, _) = clock::sweep(&predicts, &refs, state.clock);
                        state.clock = (victim + 1) % slots.len();
                        victim
                    }
                };
                let d = store.slot_id(seg, victim);
                store.replace(d, h_id)?;
                self.evictions.fetch_add(1, Ordering::Relaxed);
                d
            }
        };
        self.install(&mut state, d_id, h_id, graph);
        self.promotions.fetch_add(1, Ordering::Relaxed);
        // A concurrent delete may have set the bit before we cached it.
        if store.is_deleted(h_id) {
            self.evict_locked(&mut state, d_id, store, graph)?;
            return Ok(Placement::Cold);
        }
        Ok(Placement::Promoted(d_id))
    }

    fn install(&self, state: &mut SegmentState, d_id: u32, h_id: u32, graph: &VersionedGraph) {
        if graph.load_hot(d_id, h_id).is_err() {
            // Vertex not yet in the graph: readers fall back to main.
            let _ = graph.clear_hot(d_id);
        }
        self.refs[d_id as usize].store(false, Ordering::Release);
        if let Some(b) = state.baseline.as_mut() {
            b.on_insert(self.local(d_id));
        }
    }

    fn evict_locked(
        &self,
        state: &mut SegmentState,
        d_id: u32,
        store: &TieredStore,
        graph: &VersionedGraph,
    ) -> Result<u32> {
        let h = store.evict(d_id)?;
        graph.clear_hot(d_id)?;
        self.refs[d_id as usize].store(false, Ordering::Release);
        if let Some(b) = state.baseline.as_mut() {
            b.on_remove(self.local(d_id));
        }
        self.evictions.fetch_add(1, Ordering::Relaxed);
        Ok(h)
    }

    /// Evicts `h_id` if cached; returns the slot it occupied.
    pub fn evict_vector(
        &self,
        h_id: u32,
        store: &TieredStore,
        graph: &VersionedGraph,
    ) -> Result<Option<u32>> {
        if self.segments.is_empty() || store.mapping(h_id).is_none() {
            return Ok(None);
        }
        let seg = store.segment_of_vector(h_id);
        let mut state = self.segments[seg].lock();
        match store.mapping(h_id) {
            Some(d) => {
                self.evict_locked(&mut state, d, store, graph)?;
                Ok(Some(d))
            }
            None => Ok(None),
        }
    }

    /// Promotes `h_id` into a specific free slot, bypassing the policy.
    pub fn promote_into(
        &self,
        h_id: u32,
        d_id: u32,
        store: &TieredStore,
        graph: &VersionedGraph,
    ) -> Result<()> {
        let seg = store.segment_of_slot(d_id)?;
        let mut state = self.segments[seg].lock();
        store.promote(h_id, d_id)?;
        self.install(&mut state, d_id, h_id, graph);
        Ok(())
    }

    /// Cold-start preload: promotes the `budget` candidates with the highest
    /// `F_lambda` (ties to the lower id) into free slots of an empty tier.
    pub fn warm_up(
        &self,
        budget: usize,
        candidates: &[u32],
        store: &TieredStore,
        graph: &VersionedGraph,
    ) -> Result<Vec<u32>> {
        if store.cached_count() != 0 {
            return Err(Error::InvalidArgument("warm-up needs an empty hot tier".into()));
        }
        let mut ranked: Vec<(f64, u32)> = candidates
            .iter()
            .map(|&h| (self.predict(h, graph), h))
            .collect();
        ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut promoted = Vec::new();
        for (_, h) in ranked {
            if promoted.len() >= budget {
                break;
            }
            let seg = store.segment_of_vector(h);
            let Some(d) = store.free_slot(seg) else { continue };
            self.promote_into(h, d, store, graph)?;
            promoted.push(h);
        }
        self.warmup_promotions
            .fetch_add(promoted.len() as u64, Ordering::Relaxed);
        Ok(promoted)
    }

    /// Closes the adaptation window if it is due; returns the new theta.
    pub fn maybe_adapt(&self) -> Option<f64> {
        if !self.config.theta_adaptive {
            return None;
        }
        let (accesses, misses, sum_f) = {
            let mut w = self.window.lock();
            if w.accesses < self.config.adapt_window {
                return None;
            }
            let out = (w.accesses, w.misses, w.sum_f);
            *w = Window::default();
            out
        };
        let miss_rate = misses as f64 / accesses as f64;
        let mean_f = if misses == 0 { 0.0 } else { sum_f / misses as f64 };
        Some(self.adapt_theta(miss_rate, mean_f))
    }

    /// Applies one adaptation step.
    pub fn adapt_theta(&self, miss_rate: f64, mean_f: f64) -> f64 {
        let theta = self.controller.lock().observe(miss_rate, mean_f);
        self.theta.store(theta.to_bits(), Ordering::Release);
        theta
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::StoreConfig;

    struct Fixture {
        store: TieredStore,
        graph: VersionedGraph,
        cache: CacheManager,
    }

    fn fixture(n: u32, hot: usize, policy: Policy) -> Fixture {
        let store = TieredStore::new(&StoreConfig {
            dim: 2,
            capacity: 64,
            hot_capacity: hot,
            hot_segments: 1,
            spill_path: None,
        })
        .unwrap();
        let graph = VersionedGraph::new(64, 4, hot);
        for i in 1..=n {
            let h = store.alloc_vector(&[i as f32, 0.0]).unwrap();
            graph.add_vertex(h).unwrap();
        }
        let cache = CacheManager::new(
            CacheConfig {
                policy,
                ..CacheConfig::default()
            },
            64,
            &store,
        )
        .unwrap();
        Fixture { store, graph, cache }
    }

    /// Gives `h` roughly `n` recent accesses.
    fn heat(f: &Fixture, h: u32, n: usize) {
        for _ in 0..n {
            f.cache.record_access(h);
        }
    }

    #[test]
    fn below_threshold_stays_cold() {
        let f = fixture(4, 2, Policy::Wavp);
        f.cache.set_theta(3.75);
        heat(&f, 1, 3); // F = 0.6 * 3 = 1.8
        assert!(f.cache.predict(1, &f.graph) <= 3.75);
        assert_eq!(f.cache.place_on_miss(1, &f.store, &f.graph).unwrap(), Placement::Cold);
        assert_eq!(f.store.cached_count(), 0);
    }

    #[test]
    fn free_slot_fast_path() {
        let f = fixture(4, 2, Policy::Wavp);
        f.cache.set_theta(0.0);
        heat(&f, 3, 1);
        assert_eq!(
            f.cache.place_on_miss(3, &f.store, &f.graph).unwrap(),
            Placement::Promoted(1)
        );
        assert_eq!(f.store.mapping(3), Some(1));
        assert_eq!(f.cache.counters().evictions, 0);
        assert!(f.graph.hot_is_fresh(1, 3));
    }

    #[test]
    fn clock_sweep_spec_trace() {
        // M = 3 full with predicts [5, 1, 3] and ref bits [1, 0, 0].
        let f = fixture(6, 3, Policy::Wavp);
        f.cache.set_theta(0.0);
        for (d, h, hits) in [(1, 1, 5), (2, 2, 1), (3, 3, 3)] {
            f.cache.promote_into(h, d, &f.store, &f.graph).unwrap();
            heat(&f, h, hits);
        }
        let p: Vec<f64> = (1..=3).map(|h| f.cache.predict(h, &f.graph)).collect();
        assert!(p[1] < p[2] && p[2] < p[0]);
        f.cache.set_ref_bit(1, true);
        heat(&f, 6, 20);
        assert_eq!(
            f.cache.place_on_miss(6, &f.store, &f.graph).unwrap(),
            Placement::Promoted(2)
        );
        assert!(!f.cache.ref_bit(1), "slot 1 had its second chance");
        assert_eq!(f.store.mapping(2), None);
        assert_eq!(f.store.mapping(6), Some(2));
        assert_eq!(f.cache.clock_hand(0), 2);
        assert_eq!(f.store.check_mapping_invariants().unwrap(), 3);
    }

    #[test]
    fn lru_policy_evicts_least_recent_slot() {
        let f = fixture(6, 2, Policy::Lru);
        assert_eq!(f.cache.place_on_miss(1, &f.store, &f.graph).unwrap(), Placement::Promoted(1));
        assert_eq!(f.cache.place_on_miss(2, &f.store, &f.graph).unwrap(), Placement::Promoted(2));
        f.cache.on_hit(1);
        assert_eq!(f.cache.place_on_miss(3, &f.store, &f.graph).unwrap(), Placement::Promoted(2));
        assert_eq!(f.store.mapping(2), None);
        assert_eq!(f.store.mapping(1), Some(1));
    }

    #[test]
    fn lfu_policy_evicts_least_frequent_slot() {
        let f = fixture(6, 2, Policy::Lfu);
        f.cache.place_on_miss(1, &f.store, &f.graph).unwrap();
        f.cache.place_on_miss(2, &f.store, &f.graph).unwrap();
        f.cache.on_hit(1);
        f.cache.on_hit(1);
        f.cache.on_hit(2);
        f.cache.on_hit(2);
        f.cache.on_hit(1);
        f.cache.place_on_miss(3, &f.store, &f.graph).unwrap();
        assert_eq!(f.store.mapping(2), None);
    }

    #[test]
    fn cold_only_never_promotes() {
        let f = fixture(3, 3, Policy::ColdOnly);
        heat(&f, 1, 100);
        assert_eq!(f.cache.place_on_miss(1, &f.store, &f.graph).unwrap(), Placement::Cold);
    }

    #[test]
    fn warm_up_ranks_by_in_degree() {
        let f = fixture(4, 2, Policy::Wavp);
        // in-degrees: a=1 → 3, b=2 → 1, c=3 → 0, d=4 → 0.
        f.graph.set_neighbors(2, &[1]).unwrap();
        f.graph.set_neighbors(3, &[1]).unwrap();
        f.graph.set_neighbors(4, &[1, 2]).unwrap();
        let got = f.cache.warm_up(2, &[1, 2, 3, 4], &f.store, &f.graph).unwrap();
        assert_eq!(got, vec![1, 2]);
        assert!(f.cache.warm_up(2, &[3], &f.store, &f.graph).is_err());
    }

    #[test]
    fn warm_up_ties_and_overflow() {
        let f = fixture(4, 8, Policy::Wavp);
        let got = f.cache.warm_up(8, &[4, 3, 2, 1], &f.store, &f.graph).unwrap();
        assert_eq!(got, vec![1, 2, 3, 4]);
        let g = fixture(4, 2, Policy::Wavp);
        assert_eq!(g.cache.warm_up(2, &[4, 3, 2, 1], &g.store, &g.graph).unwrap(), vec![1, 2]);
    }

    #[test]
    fn deleted_vectors_are_not_kept_cached() {
        let f = fixture(3, 2, Policy::Lru);
        f.store.mark_deleted(2).unwrap();
        assert_eq!(f.cache.place_on_miss(2, &f.store, &f.graph).unwrap(), Placement::Cold);
        assert_eq!(f.store.cached_count(), 0);
        f.cache.place_on_miss(1, &f.store, &f.graph).unwrap();
        assert_eq!(f.cache.evict_vector(1, &f.store, &f.graph).unwrap(), Some(1));
        assert_eq!(f.cache.evict_vector(1, &f.store, &f.graph).unwrap(), None);
    }

    #[test]
    fn zero_capacity_is_cold() {
        let f = fixture(3, 0, Policy::Lru);
        assert_eq!(f.cache.place_on_miss(1, &f.store, &f.graph).unwrap(), Placement::Cold);
    }

    #[test]
    fn adaptation_follows_windows() {
        let store = TieredStore::new(&StoreConfig {
            dim: 1,
            capacity: 8,
            hot_capacity: 2,
            hot_segments: 1,
            spill_path: None,
        })
        .unwrap();
        let cache = CacheManager::new(
            CacheConfig {
                theta_adaptive: true,
                adapt_window: 4,
                ..CacheConfig::default()
            },
            8,
            &store,
        )
        .unwrap();
        assert_eq!(cache.theta(), 10.0);
        assert_eq!(cache.maybe_adapt(), None);
        assert_eq!(cache.adapt_theta(0.1, 1.0), 10.0);
        assert_eq!(cache.adapt_theta(0.2, 2.0), 12.5);
        for _ in 0..4 {
            cache.record_access(1);
        }
        // No misses in the window: the miss rate fell.
        assert!((cache.maybe_adapt().unwrap() - 11.25).abs() < 1e-12);
    }

    #[test]
    fn policy_names_round_trip() {
        for p in Policy::ALL {
            assert_eq!(p.to_string().parse::<Policy>().unwrap(), p);
        }
        assert!("mru".parse::<Policy>().is_err());
    }
}
