//! Trace driver: replays a [`Trace`] against a [`StreamingIndex`], keeps an
//! incrementally maintained ground truth in step, and emits one
//! [`MetricsRecord`] per checkpoint.
//!
//! The driver is single-threaded. Searches are grouped into batches of
//! `batch_size` that fan out over the rayon pool. A batch never spans an
//! update, so every search sees exactly the updates that precede it in the
//! trace. Query `j` (the trace's `j`-th search, counted from 0) is seeded
//! with `mix_seed(search_seed, j)`, which makes per-query results
//! independent of the batch size. Inserts and deletes run in trace order
//! because delete targets are host ids predicted from allocation order.

use std::time::{Duration, Instant};

use anyhow::{bail, ensure, Context, Result};
use serde::Serialize;
use tierann::cache::Policy;
use tierann::search::{recall_at_k, SearchStats};
use tierann::store::Dataset;
use tierann::update::DeleteOutcome;
use tierann::{IndexConfig, StreamingIndex};

use crate::metrics::{latency_percentiles, MetricsRecord};
use crate::truth::IncrementalGroundTruth;
use crate::workload::{Op, Trace};

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub index: IndexConfig,
    /// Search pool size `L`.
    pub l: usize,
    pub batch_size: usize,
    pub search_seed: u64,
    /// Preload the hot tier after the build. Applies to every policy that
    /// caches, so ablation runs start from the same hot contents.
    pub warm_up: bool,
    /// Run [`StreamingIndex::maintain`] after every step.
    pub maintenance: bool,
    /// Target query rate for latency measurement; `None` issues searches
    /// back to back.
    pub qps: Option<f64>,
}

impl RunConfig {
    pub fn new(index: IndexConfig) -> Self {
        Self {
            index,
            l: 128,
            batch_size: 256,
            search_seed: 0,
            warm_up: true,
            maintenance: true,
            qps: None,
        }
    }
}

impl RunConfig {
    /// Applies one `run.*` key; returns `false` for keys outside `run.`.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<bool> {
        let bad = || format!("invalid value {value:?} for {key}");
        match key {
            "run.L" | "run.l" => self.l = value.parse().with_context(bad)?,
            "run.batch_size" => self.batch_size = value.parse().with_context(bad)?,
            "run.search_seed" => self.search_seed = value.parse().with_context(bad)?,
            "run.warm_up" => self.warm_up = value.parse().with_context(bad)?,
            "run.maintenance" => self.maintenance = value.parse().with_context(bad)?,
            "run.qps" => {
                let q: f64 = value.parse().with_context(bad)?;
                self.qps = (q > 0.0).then_some(q);
            }
            k if k.starts_with("run.") => bail!("unknown configuration key {k}"),
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Defaults for `dim` and `capacity`, overridden by an optional flat
    /// `key=value` file holding `index.*`, `cache.*`, `update.*` and `run.*`
    /// keys.
    pub fn load(path: Option<&std::path::Path>, dim: usize, capacity: usize) -> Result<Self> {
        let mut cfg = RunConfig::new(IndexConfig::new(dim, capacity));
        if let Some(path) = path {
            let rest = cfg
                .index
                .load_file(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            for (k, v) in rest {
                ensure!(cfg.apply(&k, &v)?, "unknown configuration key {k}");
            }
        }
        Ok(cfg)
    }
}

/// Whole-run totals.
#[derive(Debug, Clone, Default, Serialize)]
pub struct RunSummary {
    pub steps: usize,
    pub checkpoints: usize,
    pub searches: usize,
    pub inserts: usize,
    pub deletes: usize,
    pub mean_recall: f64,
    pub min_recall: f64,
    /// Mean recall over every search, checkpointed or not.
    pub overall_recall: f64,
    pub modeled_cost: f64,
    pub hot_hits: u64,
    pub cold_computes: u64,
    pub miss_rate: f64,
    pub promotions: u64,
    pub evictions: u64,
    pub warmup_promotions: u64,
    /// `warmup_promotions × T_transfer`, kept out of `modeled_cost`.
    pub warmup_cost: f64,
    pub repaired: usize,
    pub consolidations: usize,
    pub reclaimed: usize,
    pub gt_rescans: usize,
    pub final_theta: f64,
    pub live: usize,
    pub build_secs: f64,
    pub wall_secs: f64,
}

/// Everything a run produced.
pub struct RunResult {
    pub records: Vec<MetricsRecord>,
    pub summary: RunSummary,
    pub index: StreamingIndex,
}

#[derive(Default)]
struct Interval {
    recalls: Vec<f64>,
    latencies_ms: Vec<f64>,
    stats: SearchStats,
    search_time: Duration,
    inserts: usize,
    insert_time: Duration,
}

struct Driver<'a> {
    cfg: &'a RunConfig,
    base: &'a Dataset,
    queries: &'a Dataset,
    index: Option<StreamingIndex>,
    gt: IncrementalGroundTruth,
    /// Base row of every allocated host id (index 0 unused).
    row_of: Vec<usize>,
    pending: Vec<(usize, usize)>,
    next_search: u64,
    interval: Interval,
    summary: RunSummary,
    total: SearchStats,
    all_recalls: Vec<f64>,
    step_recalls: Vec<f64>,
    clock: Instant,
    issued: u64,
}

/// Total vectors the trace allocates.
pub fn allocations(trace: &Trace) -> usize {
    trace
        .ops()
        .map(|op| match op {
            Op::Build(n) => *n,
            Op::Insert(_) => 1,
            _ => 0,
        })
        .sum()
}

fn max_k(trace: &Trace) -> usize {
    trace
        .ops()
        .filter_map(|op| {
            if let Op::Search { k, .. } = op {
                Some(*k)
            } else {
                None
            }
        })
        .max()
        .unwrap_or(1)
}

impl<'a> Driver<'a> {
    fn index(&self) -> Result<&StreamingIndex> {
        self.index
            .as_ref()
            .context("operation before the index exists")
    }

    fn build(&mut self, n: usize) -> Result<()> {
        ensure!(self.index.is_none(), "second build in one trace");
        let started = Instant::now();
        let index = StreamingIndex::build(self.cfg.index.clone(), &self.base.slice(0, n))?;
        self.summary.build_secs = started.elapsed().as_secs_f64();
        for row in 0..n {
            self.row_of.push(row);
            self.gt.insert(row as u32 + 1, self.base.row(row));
        }
        if self.cfg.warm_up && self.cfg.index.cache.policy != Policy::ColdOnly {
            index.warm_up(None)?;
        }
        self.index = Some(index);
        Ok(())
    }

    fn ensure_index(&mut self) -> Result<()> {
        if self.index.is_none() {
            self.index = Some(StreamingIndex::new(self.cfg.index.clone())?);
        }
        Ok(())
    }

    fn insert(&mut self, row: usize) -> Result<()> {
        self.flush()?;
        self.ensure_index()?;
        let started = Instant::now();
        let h = self.index()?.insert(self.base.row(row))?;
        self.interval.insert_time += started.elapsed();
        self.interval.inserts += 1;
        self.summary.inserts += 1;
        ensure!(
            h as usize == self.row_of.len(),
            "insert got id {h}, expected {}",
            self.row_of.len()
        );
        self.row_of.push(row);
        self.gt.insert(h, self.base.row(row));
        Ok(())
    }

    fn delete(&mut self, h: u32) -> Result<()> {
        self.flush()?;
        match self.index()?.delete(h)? {
            DeleteOutcome::Deleted => {}
            other => bail!("delete of {h} returned {other:?}"),
        }
        self.gt.delete(h);
        self.summary.deletes += 1;
        Ok(())
    }

    /// Waits until the rate limiter admits the next query; returns the
    /// query's scheduled issue time.
    fn admit(&mut self) -> Option<Instant> {
        let qps = self.cfg.qps?;
        if self.issued == 0 {
            self.clock = Instant::now();
        }
        let at = self.clock + Duration::from_secs_f64(self.issued as f64 / qps);
        self.issued += 1;
        let now = Instant::now();
        if at > now {
            std::thread::sleep(at - now);
        }
        Some(at)
    }

    fn flush(&mut self) -> Result<()> {
        if self.pending.is_empty() {
            return Ok(());
        }
        let pending = std::mem::take(&mut self.pending);
        let index = self
            .index
            .as_ref()
            .context("search before the index exists")?;
        if index.live_count() == 0 {
            bail!("search on an empty index");
        }
        let base = self.base;
        let row_of = &self.row_of;
        let live = index.live().sorted();
        self.gt
            .refresh(|| live.iter().map(|&h| (h, base.row(row_of[h as usize]))));
        for chunk in pending.chunks(self.cfg.batch_size.max(1)) {
            let scheduled = if self.cfg.qps.is_some() {
                let first = self.admit();
                for _ in 1..chunk.len() {
                    self.admit();
                }
                first
            } else {
                None
            };
            let index = self.index.as_ref().unwrap();
            let qs: Vec<&[f32]> = chunk.iter().map(|&(q, _)| self.queries.row(q)).collect();
            let k = chunk.iter().map(|c| c.1).max().unwrap();
            let started = Instant::now();
            let outs = index.search_batch(
                &qs,
                k,
                self.cfg.l.max(k),
                self.cfg.search_seed,
                self.next_search,
            )?;
            let elapsed = started.elapsed();
            let queued = scheduled
                .map(|s| started.saturating_duration_since(s))
                .unwrap_or_default();
            self.next_search += chunk.len() as u64;
            self.interval.search_time += elapsed;
            for (&(q, k), out) in chunk.iter().zip(&outs) {
                let truth = self.gt.top_k(q);
                let r = recall_at_k(&out.ids, &truth[..truth.len().min(k)], k);
                self.step_recalls.push(r);
                self.all_recalls.push(r);
                self.interval.recalls.push(r);
                self.interval
                    .latencies_ms
                    .push((queued + out.stats.latency).as_secs_f64() * 1e3);
                self.interval.stats.accumulate(&out.stats);
                self.total.accumulate(&out.stats);
            }
            self.summary.searches += chunk.len();
        }
        Ok(())
    }

    fn checkpoint(&mut self, step: usize, k: usize) -> Result<MetricsRecord> {
        self.flush()?;
        let iv = std::mem::take(&mut self.interval);
        let recalls = std::mem::take(&mut self.step_recalls);
        let index = self.index()?;
        let (p50, p95, p99) = latency_percentiles(&iv.latencies_ms);
        let rate = |n: usize, t: Duration| {
            if t.is_zero() {
                0.0
            } else {
                n as f64 / t.as_secs_f64()
            }
        };
        Ok(MetricsRecord {
            step,
            k,
            recall_at_k: mean(&recalls),
            searches: recalls.len(),
            search_throughput: rate(iv.recalls.len(), iv.search_time),
            insert_throughput: rate(iv.inserts, iv.insert_time),
            miss_rate: iv.stats.miss_rate(),
            p50_latency_ms: p50,
            p95_latency_ms: p95,
            p99_latency_ms: p99,
            modeled_cost: iv.stats.modeled_cost,
            cumulative_modeled_cost: self.total.modeled_cost,
            promotions: iv.stats.promotions,
            live: index.live_count(),
            deleted: index.deleted_count(),
        })
    }

    fn maintain(&mut self) -> Result<()> {
        if !self.cfg.maintenance {
            return Ok(());
        }
        let Some(index) = self.index.as_ref() else {
            return Ok(());
        };
        let report = index.maintain()?;
        if let Some(r) = report.repair {
            self.summary.repaired += r.repaired;
        }
        if let Some(m) = report.consolidation {
            self.summary.consolidations += 1;
            self.summary.reclaimed += m.reclaimed;
        }
        Ok(())
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Replays `trace`, calling `sink` with every checkpoint record as it is
/// produced.
pub fn run_trace(
    trace: &Trace,
    base: &Dataset,
    queries: &Dataset,
    cfg: &RunConfig,
    mut sink: impl FnMut(&MetricsRecord) -> Result<()>,
) -> Result<RunResult> {
    ensure!(
        base.dim() == cfg.index.dim && (queries.is_empty() || queries.dim() == cfg.index.dim),
        "dimension mismatch: config {}, base {}, queries {}",
        cfg.index.dim,
        base.dim(),
        queries.dim()
    );
    trace.validate(base.len(), queries.len())?;
    let mut cfg = cfg.clone();
    cfg.index.capacity = cfg.index.capacity.max(allocations(trace));
    cfg.index.validate()?;
    let k = max_k(trace);
    let started = Instant::now();
    let mut d = Driver {
        cfg: &cfg,
        base,
        queries,
        index: None,
        gt: IncrementalGroundTruth::new(queries.clone(), k),
        row_of: vec![usize::MAX],
        pending: Vec::new(),
        next_search: 0,
        interval: Interval::default(),
        summary: RunSummary::default(),
        total: SearchStats::default(),
        all_recalls: Vec::new(),
        step_recalls: Vec::new(),
        clock: Instant::now(),
        issued: 0,
    };
    let mut records = Vec::new();
    for step in &trace.steps {
        for op in &step.ops {
            match *op {
                Op::Build(n) => d.build(n)?,
                Op::Insert(row) => d.insert(row)?,
                Op::Delete(h) => d.delete(h)?,
                Op::Search { query, k } => d.pending.push((query, k)),
                Op::Checkpoint => {
                    let rec = d.checkpoint(step.index, k)?;
                    sink(&rec)?;
                    records.push(rec);
                }
            }
        }
        d.flush()?;
        d.step_recalls.clear();
        d.maintain()?;
        d.summary.steps += 1;
    }
    let index = match d.index.take() {
        Some(i) => i,
        None => StreamingIndex::new(cfg.index.clone())?,
    };
    let counters = index.cache().counters();
    let mut summary = d.summary;
    summary.checkpoints = records.len();
    let cp: Vec<f64> = records.iter().map(|r| r.recall_at_k).collect();
    summary.mean_recall = mean(&cp);
    summary.min_recall = cp.iter().copied().fold(f64::INFINITY, f64::min);
    if cp.is_empty() {
        summary.min_recall = 0.0;
    }
    summary.overall_recall = mean(&d.all_recalls);
    summary.modeled_cost = d.total.modeled_cost;
    summary.hot_hits = d.total.hot_hits;
    summary.cold_computes = d.total.cold_computes;
    summary.miss_rate = d.total.miss_rate();
    summary.promotions = counters.promotions;
    summary.evictions = counters.evictions;
    summary.warmup_promotions = counters.warmup_promotions;
    summary.warmup_cost = counters.warmup_promotions as f64 * cfg.index.cache.cost.t_transfer;
    summary.gt_rescans = d.gt.rescans();
    summary.final_theta = index.cache().theta();
    summary.live = index.live_count();
    summary.wall_secs = started.elapsed().as_secs_f64();
    Ok(RunResult {
        records,
        summary,
        index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{mixture_pair, MixtureSpec};
    use crate::truth::exact_top_k;
    use crate::workload::{sliding_window, SearchPlan};

    fn config(dim: usize) -> IndexConfig {
        let mut c = IndexConfig::new(dim, 0);
        c.degree = 16;
        c.partition_size = 4096;
        c
    }

    fn small() -> (Dataset, Dataset, Trace) {
        let (base, queries) = mixture_pair(MixtureSpec::new(8, 3), 3000, 20);
        let mut plan = SearchPlan::new(20, 10);
        plan.per_step = 3;
        let trace = sliding_window(3000, 10, plan, 7).unwrap();
        (base, queries, trace)
    }

    #[test]
    fn sliding_run_is_accurate_and_sane() {
        let (base, queries, trace) = small();
        let mut cfg = RunConfig::new(config(8));
        cfg.l = 64;
        let mut seen = 0;
        let res = run_trace(&trace, &base, &queries, &cfg, |r| {
            r.check().map_err(anyhow::Error::msg)?;
            seen += 1;
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, 5);
        assert_eq!(res.records.len(), 5);
        for r in &res.records {
            assert_eq!(r.searches, 20);
            assert_eq!(r.live, 1500);
            assert!(r.recall_at_k >= 0.9, "recall {}", r.recall_at_k);
        }
        assert_eq!(res.summary.inserts, 2700);
        assert_eq!(res.summary.deletes, 1500);
        assert!(res.summary.warmup_promotions > 0);
        // The maintained ground truth matches a rescan at the end.
        let live: Vec<(u32, &[f32])> = res
            .index
            .live()
            .sorted()
            .into_iter()
            .map(|h| (h, base.row(h as usize - 1)))
            .collect();
        for qi in 0..queries.len() {
            let exact = exact_top_k(queries.row(qi), live.iter().copied(), 10);
            let out = res.index.brute_force(queries.row(qi), 10).unwrap();
            assert_eq!(exact, out);
        }
    }

    #[test]
    fn batch_size_does_not_change_results() {
        let (base, queries, trace) = small();
        let mut a = RunConfig::new(config(8));
        a.batch_size = 1;
        a.l = 32;
        let mut b = a.clone();
        b.batch_size = 2048;
        let ra = run_trace(&trace, &base, &queries, &a, |_| Ok(())).unwrap();
        let rb = run_trace(&trace, &base, &queries, &b, |_| Ok(())).unwrap();
        let recalls = |r: &RunResult| r.records.iter().map(|x| x.recall_at_k).collect::<Vec<_>>();
        assert_eq!(recalls(&ra), recalls(&rb));
    }

    #[test]
    fn config_file_keys() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(
            &path,
            "index.R = 24\ncache.policy = lru\nrun.L = 96\nrun.qps = 0\n",
        )
        .unwrap();
        let cfg = RunConfig::load(Some(&path), 8, 100).unwrap();
        assert_eq!(cfg.index.degree, 24);
        assert_eq!(cfg.index.cache.policy, Policy::Lru);
        assert_eq!(cfg.l, 96);
        assert_eq!(cfg.qps, None);
        std::fs::write(&path, "run.bogus = 1\n").unwrap();
        assert!(RunConfig::load(Some(&path), 8, 100).is_err());
        std::fs::write(&path, "other.key = 1\n").unwrap();
        assert!(RunConfig::load(Some(&path), 8, 100).is_err());
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let (base, queries, trace) = small();
        let cfg = RunConfig::new(config(4));
        assert!(run_trace(&trace, &base, &queries, &cfg, |_| Ok(())).is_err());
    }

    #[test]
    fn rate_limiter_spaces_queries() {
        let (base, queries, _) = small();
        let trace =
            Trace::parse("# step 1\nB 500\nS 0 5\nS 1 5\nS 2 5\nS 3 5\nS 4 5\nC\n").unwrap();
        let mut cfg = RunConfig::new(config(8));
        cfg.qps = Some(100.0);
        cfg.batch_size = 1;
        let started = Instant::now();
        let res = run_trace(&trace, &base, &queries, &cfg, |_| Ok(())).unwrap();
        assert!(res.records[0].searches == 5);
        // Five queries at 100 qps span at least 40 ms.
        assert!(started.elapsed().as_secs_f64() >= 0.04);
    }
}
