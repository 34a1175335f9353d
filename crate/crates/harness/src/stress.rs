//! Consistency stress test: interleaved insert and search
//! batches with read-after-write queries.
//!
//! The index is built on `n_base` vectors with the whole set cached
//! (`M = N`) and warmed up. Each batch holds `batch_size / 2` inserts and
//! `batch_size / 2` searches. The searches look up, with `k = 1`, the
//! vectors inserted by the previous batch, and run on a second thread
//! concurrently with the current batch's inserts. Tier synchronization runs
//! after every batch. Recall@1 is the fraction of searches whose top result
//! is the queried vector itself.

use std::time::Instant;

use anyhow::{ensure, Result};
use serde::Serialize;
use tierann::search::mix_seed;
use tierann::store::Dataset;
use tierann::{IndexConfig, StreamingIndex};

#[derive(Debug, Clone)]
pub struct StressConfig {
    pub n_base: usize,
    pub batches: usize,
    pub batch_size: usize,
    pub l: usize,
    pub degree: usize,
    pub sync: bool,
    pub seed: u64,
}

impl StressConfig {
    pub fn new(n_base: usize, batches: usize) -> Self {
        Self {
            n_base,
            batches,
            batch_size: 10,
            l: 64,
            degree: 32,
            sync: true,
            seed: 0,
        }
    }

    /// Base rows the run consumes.
    pub fn rows_needed(&self) -> usize {
        self.n_base + self.batches * (self.batch_size / 2)
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct StressReport {
    pub sync: bool,
    pub inserts: usize,
    pub searches: usize,
    pub found: usize,
    pub recall_at_1: f64,
    pub hot_list_reads: u64,
    pub synced: usize,
    pub wall_secs: f64,
}

pub fn consistency_stress(data: &Dataset, cfg: &StressConfig) -> Result<StressReport> {
    let half = cfg.batch_size / 2;
    ensure!(half >= 1, "batch size must be at least 2");
    ensure!(
        data.len() >= cfg.rows_needed(),
        "stress needs {} rows, dataset has {}",
        cfg.rows_needed(),
        data.len()
    );
    let capacity = cfg.rows_needed();
    let mut config = IndexConfig::new(data.dim(), capacity);
    config.degree = cfg.degree;
    config.hot_capacity = Some(capacity);
    let index = StreamingIndex::build(config, &data.slice(0, cfg.n_base))?;
    index.warm_up(None)?;
    index.set_sync_disabled(!cfg.sync);
    let started = Instant::now();
    let mut report = StressReport {
        sync: cfg.sync,
        ..StressReport::default()
    };
    let mut previous: Vec<(u32, usize)> = Vec::new();
    let mut next_row = cfg.n_base;
    let mut query_no = 0u64;
    for _ in 0..cfg.batches {
        let rows: Vec<usize> = (next_row..next_row + half).collect();
        next_row += half;
        let (inserted, searched) = std::thread::scope(|s| {
            let writer = s.spawn(|| {
                rows.iter()
                    .map(|&r| index.insert(data.row(r)).map(|h| (h, r)))
                    .collect::<tierann::Result<Vec<_>>>()
            });
            let reader = s.spawn(|| {
                previous
                    .iter()
                    .enumerate()
                    .map(|(i, &(h, r))| {
                        let seed = mix_seed(cfg.seed, query_no + i as u64);
                        index
                            .search(data.row(r), 1, cfg.l, seed)
                            .map(|o| (o.ids.first() == Some(&h), o.stats.hot_list_reads))
                    })
                    .collect::<tierann::Result<Vec<_>>>()
            });
            (
                writer.join().expect("insert thread"),
                reader.join().expect("search thread"),
            )
        });
        let searched = searched?;
        query_no += searched.len() as u64;
        report.searches += searched.len();
        report.found += searched.iter().filter(|s| s.0).count();
        report.hot_list_reads += searched.iter().map(|s| s.1).sum::<u64>();
        previous = inserted?;
        report.inserts += previous.len();
        report.synced += index.sync_pending().synced;
    }
    report.recall_at_1 = if report.searches == 0 {
        0.0
    } else {
        report.found as f64 / report.searches as f64
    };
    report.wall_secs = started.elapsed().as_secs_f64();
    Ok(report)
}
