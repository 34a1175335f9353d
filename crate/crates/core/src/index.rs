//! The streaming index: tiered store, versioned graph, cache manager and
//! the bookkeeping the update pipeline needs, behind one handle.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU32, AtomicUsize, Ordering};

use parking_lot::{Mutex, RwLock};

use crate::cache::{CacheConfig, CacheManager};
use crate::error::{Error, Result};
use crate::graph::{build_lists, BuildParams, VersionedGraph};
use crate::search::{LiveSet, SearchContext, SearchOutput, SearchStats};
use crate::store::{Dataset, StoreConfig, TieredStore};
use crate::update::Triplet;

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateConfig {
    /// Deleted-neighbor fraction above which a vertex is queued for repair.
    pub repair_threshold: f64,
    /// Replacement candidates taken per deleted neighbor (`c`).
    pub repair_fanout: usize,
    /// Vertices repaired per maintenance tick.
    pub repair_budget: usize,
    /// Deleted share of live + deleted above which consolidation starts.
    pub consolidation_threshold: f64,
    /// Graph versions allowed at once (active + snapshots).
    pub version_bound: usize,
    pub sync_batch: usize,
    pub repair_enabled: bool,
    pub consolidation_enabled: bool,
    /// Beam width of the insertion search.
    pub l_insert: usize,
    pub insert_seed: u64,
}

impl Default for UpdateConfig {
    fn default() -> Self {
        Self {
            repair_threshold: 0.5,
            repair_fanout: 8,
            repair_budget: 1024,
            consolidation_threshold: 0.2,
            version_bound: 2,
            sync_batch: 256,
            repair_enabled: true,
            consolidation_enabled: true,
            l_insert: 128,
            insert_seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexConfig {
    pub dim: usize,
    /// Maximum number of vectors ever allocated.
    pub capacity: usize,
    /// Out-degree `R`.
    pub degree: usize,
    pub partition_size: usize,
    pub merge_beam: usize,
    pub build_seed: u64,
    /// Hot-tier slots; `None` derives it from `cache.capacity_fraction`.
    pub hot_capacity: Option<usize>,
    pub hot_segments: usize,
    pub spill_path: Option<PathBuf>,
    pub cache: CacheConfig,
    pub update: UpdateConfig,
}

impl IndexConfig {
    pub fn new(dim: usize, capacity: usize) -> Self {
        Self {
            dim,
            capacity,
            degree: 32,
            partition_size: 32_768,
            merge_beam: 64,
            build_seed: 0,
            hot_capacity: None,
            hot_segments: 1,
            spill_path: None,
            cache: CacheConfig::default(),
            update: UpdateConfig::default(),
        }
    }

    pub fn resolved_hot_capacity(&self) -> usize {
        self.hot_capacity
            .unwrap_or_else(|| (self.cache.capacity_fraction * self.capacity as f64).round() as usize)
    }

    pub fn build_params(&self) -> BuildParams {
        BuildParams {
            degree: self.degree,
            partition_size: self.partition_size,
            merge_beam: self.merge_beam,
            seed: self.build_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.capacity == 0 {
            return Err(Error::Config("dim and capacity must be positive".into()));
        }
        if self.degree < 2 {
            return Err(Error::Config("degree must be at least 2".into()));
        }
        if self.update.version_bound < 1 {
            return Err(Error::Config("version_bound must be at least 1".into()));
        }
        if self.update.l_insert == 0 || self.update.sync_batch == 0 {
            return Err(Error::Config("l_insert and sync_batch must be positive".into()));
        }
        self.cache.validate()
    }
}

/// Consolidation window state shared with inserts.
#[derive(Debug, Default)]
pub(crate) struct Window {
    pub(crate) log: Vec<Triplet>,
}

#[derive(Debug)]
pub struct StreamingIndex {
    pub(crate) config: IndexConfig,
    pub(crate) store: TieredStore,
    pub(crate) graph: VersionedGraph,
    pub(crate) cache: CacheManager,
    pub(crate) live: LiveSet,
    /// Shared by insert/delete/repair; exclusive for snapshot and merge.
    pub(crate) phase: RwLock<()>,
    pub(crate) repair_queue: Mutex<BTreeSet<u32>>,
    /// Highest id covered by the active snapshot; 0 when no window is open.
    pub(crate) window_max_id: AtomicU32,
    pub(crate) window: Mutex<Window>,
    pub(crate) snapshots_active: AtomicUsize,
    pub(crate) pending_sync: Mutex<BTreeSet<u32>>,
    /// Deleted but not yet reclaimed.
    pub(crate) deleted_count: AtomicUsize,
    pub(crate) sync_disabled: AtomicBool,
    pub(crate) totals: Mutex<SearchStats>,
    pub(crate) queries: AtomicUsize,
}

impl StreamingIndex {
    /// An empty index.
    pub fn new(config: IndexConfig) -> Result<Self> {
        config.validate()?;
        let hot = config.resolved_hot_capacity();
        let store = TieredStore::new(&StoreConfig {
            dim: config.dim,
            capacity: config.capacity,
            hot_capacity: hot,
            hot_segments: config.hot_segments,
            spill_path: config.spill_path.clone(),
        })?;
        let graph = VersionedGraph::new(config.capacity, config.degree, hot);
        let cache = CacheManager::new(config.cache.clone(), config.capacity, &store)?;
        Ok(Self {
            store,
            graph,
            cache,
            live: LiveSet::new(),
            phase: RwLock::new(()),
            repair_queue: Mutex::default(),
            window_max_id: AtomicU32::new(0),
            window: Mutex::default(),
            snapshots_active: AtomicUsize::new(0),
            pending_sync: Mutex::default(),
            deleted_count: AtomicUsize::new(0),
            sync_disabled: AtomicBool::new(false),
            totals: Mutex::default(),
            queries: AtomicUsize::new(0),
            config,
        })
    }

    /// Builds over `data`; row `i` gets host id `i + 1`.
    pub fn build(config: IndexConfig, data: &Dataset) -> Result<Self> {
        if data.dim() != config.dim {
            return Err(Error::DimensionMismatch {
                expected: config.dim,
                actual: data.dim(),
            });
        }
        if data.len() > config.capacity {
            return Err(Error::CapacityExhausted(config.capacity));
        }
        let lists = build_lists(data, &config.build_params())?;
        let index = Self::new(config)?;
        index.load_lists(data, &lists)?;
        Ok(index)
    }

    /// Installs prebuilt lists for `data` into an empty index.
    pub fn load_lists(&self, data: &Dataset, lists: &[Vec<u32>]) -> Result<()> {
        if self.store.max_id() != 0 || lists.len() != data.len() {
            return Err(Error::InvalidArgument(
                "lists must match the data and the index must be empty".into(),
            ));
        }
        for row in data.iter() {
            let h = self.store.alloc_vector(row)?;
            self.graph.add_vertex(h)?;
        }
        for (i, l) in lists.iter().enumerate() {
            self.graph.set_neighbors(i as u32 + 1, l)?;
            self.live.insert(i as u32 + 1);
        }
        Ok(())
    }

    pub fn config(&self) -> &IndexConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn store(&self) -> &TieredStore {
        &self.store
    }

    pub fn graph(&self) -> &VersionedGraph {
        &self.graph
    }

    pub fn cache(&self) -> &CacheManager {
        &self.cache
    }

    pub fn live(&self) -> &LiveSet {
        &self.live
    }

    pub fn live_count(&self) -> usize {
        self.live.len()
    }

    /// Deleted vertices not yet reclaimed by consolidation.
    pub fn deleted_count(&self) -> usize {
        self.deleted_count.load(Ordering::Acquire)
    }

    pub fn is_live(&self, h_id: u32) -> bool {
        self.live.contains(h_id)
    }

    /// Test-only switch: stop propagating list changes to hot copies and let
    /// readers use stale copies.
    pub fn set_sync_disabled(&self, disabled: bool) {
        self.sync_disabled.store(disabled, Ordering::Release);
    }

    pub fn sync_disabled(&self) -> bool {
        self.sync_disabled.load(Ordering::Acquire)
    }

    pub(crate) fn context(&self) -> SearchContext<'_> {
        SearchContext {
            store: &self.store,
            graph: &self.graph,
            cache: &self.cache,
            live: &self.live,
            allow_stale_hot: self.sync_disabled(),
        }
    }

    fn record(&self, outputs: &[SearchOutput]) {
        let mut t = self.totals.lock();
        for o in outputs {
            t.accumulate(&o.stats);
        }
        self.queries.fetch_add(outputs.len(), Ordering::Relaxed);
    }

    /// Top-`k` search with pool size `l`, seeded by `seed`.
    pub fn search(&self, query: &[f32], k: usize, l: usize, seed: u64) -> Result<SearchOutput> {
        let out = self.context().search(query, k, l, seed)?;
        self.record(std::slice::from_ref(&out));
        Ok(out)
    }

    /// Searches a batch; query `i` is seeded with `mix_seed(seed, first + i)`.
    pub fn search_batch<Q: AsRef<[f32]> + Sync>(
        &self,
        queries: &[Q],
        k: usize,
        l: usize,
        seed: u64,
        first: u64,
    ) -> Result<Vec<SearchOutput>> {
        let out = self.context().search_batch(queries, k, l, seed, first)?;
        self.record(&out);
        Ok(out)
    }

    /// Accumulated search counters and the number of queries behind them.
    pub fn search_totals(&self) -> (SearchStats, usize) {
        (*self.totals.lock(), self.queries.load(Ordering::Relaxed))
    }

    pub fn reset_search_totals(&self) {
        *self.totals.lock() = SearchStats::default();
        self.queries.store(0, Ordering::Relaxed);
    }

    /// Preloads the hot tier with the top predicted live vectors.
    pub fn warm_up(&self, budget: Option<usize>) -> Result<Vec<u32>> {
        let budget = budget.unwrap_or(self.store.hot_capacity());
        self.cache
            .warm_up(budget, &self.live.sorted(), &self.store, &self.graph)
    }

    /// Exact top-`k` over live vectors (ties to the lower id).
    pub fn brute_force(&self, query: &[f32], k: usize) -> Result<Vec<(u32, f32)>> {
        let mut all = Vec::with_capacity(self.live.len());
        for h in self.live.sorted() {
            let (d, _) = self.store.distance_cold(h, query)?;
            all.push((d, h));
        }
        all.sort_by(|a, b| crate::distance::cmp_candidates(*a, *b));
        Ok(all.into_iter().take(k).map(|(d, h)| (h, d)).collect())
    }
}
