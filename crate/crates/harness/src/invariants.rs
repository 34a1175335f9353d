//! Randomized never-resurrect and read-after-write invariant suites
//! (acceptance criterion 11).
//!
//! Two drivers run against a live index:
//!
//! * [`interleaved`] issues a single random stream of inserts, deletes,
//!   searches and maintenance ticks (repair, consolidation, tier sync).
//!   After every insert the new vector is looked up at `L = 64` and again at
//!   a random `L` in `1..=64`; both must return it as the top result. No
//!   search may ever return an id that was deleted.
//! * [`concurrent`] runs a writer thread (inserts and deletes) against a
//!   reader thread. Reads only check facts that were published before the
//!   read began: ids deleted earlier must not appear, and the most recent
//!   completed insert must be found.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use anyhow::{bail, ensure, Result};
use parking_lot::Mutex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use tierann::search::mix_seed;
use tierann::store::Dataset;
use tierann::{IndexConfig, StreamingIndex};

#[derive(Debug, Clone)]
pub struct InvariantConfig {
    /// Vectors in the initial build.
    pub n_base: usize,
    /// Total randomized operations.
    pub ops: usize,
    /// Beam width for the read-after-write lookups.
    pub l: usize,
    pub degree: usize,
    /// Fraction of the hot tier relative to capacity.
    pub hot_fraction: f64,
    /// Operation mix (insert, delete, search); the remainder are maintenance ticks.
    pub p_insert: f64,
    pub p_delete: f64,
    pub p_search: f64,
    pub seed: u64,
}

impl InvariantConfig {
    pub fn new(n_base: usize, ops: usize) -> Self {
        Self {
            n_base,
            ops,
            l: 64,
            degree: 32,
            hot_fraction: 0.2,
            p_insert: 0.3,
            p_delete: 0.25,
            p_search: 0.4,
            seed: 0,
        }
    }

    /// Upper bound on rows consumed (every op could be an insert).
    pub fn rows_needed(&self) -> usize {
        self.n_base + self.ops
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct InvariantReport {
    pub ops: usize,
    pub inserts: usize,
    pub deletes: usize,
    pub searches: usize,
    pub maintenance: usize,
    pub consolidations: usize,
    pub repaired: usize,
    /// Read-after-write lookups performed and how many found the new id first.
    pub raw_checks: usize,
    pub raw_found: usize,
    /// Read-after-write lookups at a random beam width in `1..=l`.
    pub raw_any_checks: usize,
    pub raw_any_found: usize,
    /// Search results naming a deleted id (must be zero).
    pub resurrections: usize,
    pub wall_secs: f64,
}

impl InvariantReport {
    pub fn passed(&self) -> bool {
        self.resurrections == 0
            && self.raw_found == self.raw_checks
            && self.raw_any_found == self.raw_any_checks
    }
}

fn build(data: &Dataset, cfg: &InvariantConfig) -> Result<StreamingIndex> {
    ensure!(
        data.len() >= cfg.rows_needed(),
        "invariant suite needs {} rows, dataset has {}",
        cfg.rows_needed(),
        data.len()
    );
    let capacity = cfg.rows_needed();
    let mut config = IndexConfig::new(data.dim(), capacity);
    config.degree = cfg.degree;
    config.hot_capacity = Some(((capacity as f64) * cfg.hot_fraction) as usize);
    let index = StreamingIndex::build(config, &data.slice(0, cfg.n_base))?;
    index.warm_up(None)?;
    Ok(index)
}

/// Single-driver random interleaving of every update and search path.
pub fn interleaved(data: &Dataset, cfg: &InvariantConfig) -> Result<InvariantReport> {
    let index = build(data, cfg)?;
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = InvariantReport::default();
    let mut next_row = cfg.n_base;
    // Rows of every allocated id, so deleted vectors can be used as queries.
    let mut rows: Vec<usize> = (0..cfg.n_base).collect();
    let mut deleted = vec![false; cfg.rows_needed() + 1];
    for op in 0..cfg.ops {
        let seed = mix_seed(cfg.seed, op as u64);
        let roll: f64 = rng.random();
        if roll < cfg.p_insert {
            let row = next_row;
            next_row += 1;
            let h = index.insert(data.row(row))?;
            ensure!(h as usize == rows.len() + 1, "unexpected id {h}");
            rows.push(row);
            report.inserts += 1;
            report.raw_checks += 1;
            let out = index.search(data.row(row), 1, cfg.l, seed)?;
            if out.ids.first() == Some(&h) {
                report.raw_found += 1;
            }
            let l_any = rng.random_range(1..=cfg.l);
            report.raw_any_checks += 1;
            let out = index.search(data.row(row), 1, l_any, mix_seed(seed, 1))?;
            if out.ids.first() == Some(&h) {
                report.raw_any_found += 1;
            }
        } else if roll < cfg.p_insert + cfg.p_delete {
            if index.live_count() <= 1 {
                continue;
            }
            let h = index.live().sample(&mut rng, 1)[0];
            index.delete(h)?;
            deleted[h as usize] = true;
            report.deletes += 1;
            // The deleted vector itself is the query most likely to find it.
            let out = index.search(data.row(rows[h as usize - 1]), 10, cfg.l, seed)?;
            report.searches += 1;
            report.resurrections += out.ids.iter().filter(|&&x| deleted[x as usize]).count();
        } else if roll < cfg.p_insert + cfg.p_delete + cfg.p_search {
            // Query either a random allocated vector (live or deleted) or a
            // random row not yet inserted.
            let row = if rng.random_bool(0.7) {
                rows[rng.random_range(0..rows.len())]
            } else {
                rng.random_range(next_row..data.len())
            };
            let out = index.search(data.row(row), 10, cfg.l, seed)?;
            report.searches += 1;
            report.resurrections += out.ids.iter().filter(|&&x| deleted[x as usize]).count();
        } else {
            let m = index.maintain()?;
            report.maintenance += 1;
            report.repaired += m.repair.map_or(0, |r| r.repaired);
            if m.consolidation.is_some() {
                report.consolidations += 1;
                index.graph().check_invariants()?;
                index.store().check_mapping_invariants()?;
            }
        }
        report.ops += 1;
    }
    report.wall_secs = started.elapsed().as_secs_f64();
    Ok(report)
}

/// Writer and reader threads racing on one index.
pub fn concurrent(data: &Dataset, cfg: &InvariantConfig) -> Result<InvariantReport> {
    let index = build(data, cfg)?;
    let started = Instant::now();
    // Deletions and inserts are appended only after the call returns, so a
    // reader that loads the published length sees completed operations only.
    let deleted_log: Mutex<Vec<u32>> = Mutex::new(Vec::new());
    let inserted_log: Mutex<Vec<(u32, usize)>> = Mutex::new(Vec::new());
    let writer_done = AtomicUsize::new(0);
    let writer_ops = cfg.ops / 2;
    let reader_ops = cfg.ops - writer_ops;
    let p_write = cfg.p_insert + cfg.p_delete;
    let (writer, reader) = std::thread::scope(|s| {
        let writer = s.spawn(|| -> Result<InvariantReport> {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5752);
            let mut r = InvariantReport::default();
            let mut next_row = cfg.n_base;
            for _ in 0..writer_ops {
                let roll = rng.random::<f64>() * p_write.max(f64::MIN_POSITIVE);
                if roll < cfg.p_insert {
                    let row = next_row;
                    next_row += 1;
                    let h = index.insert(data.row(row))?;
                    inserted_log.lock().push((h, row));
                    r.inserts += 1;
                } else if index.live_count() > 1 {
                    let h = index.live().sample(&mut rng, 1)[0];
                    index.delete(h)?;
                    deleted_log.lock().push(h);
                    r.deletes += 1;
                }
                if rng.random_bool(0.02) {
                    index.sync_pending();
                    r.maintenance += 1;
                }
                r.ops += 1;
            }
            writer_done.store(1, Ordering::Release);
            Ok(r)
        });
        let reader = s.spawn(|| -> Result<InvariantReport> {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5244);
            let mut r = InvariantReport::default();
            let mut deleted = vec![false; cfg.rows_needed() + 1];
            let mut seen_deletes = 0;
            for i in 0..reader_ops {
                {
                    let log = deleted_log.lock();
                    for &h in &log[seen_deletes..] {
                        deleted[h as usize] = true;
                    }
                    seen_deletes = log.len();
                }
                let last = inserted_log.lock().last().copied();
                let seed = mix_seed(cfg.seed ^ 0x5244, i as u64);
                match last {
                    Some((h, row)) if rng.random_bool(0.5) && !deleted[h as usize] => {
                        let out = index.search(data.row(row), 1, cfg.l, seed)?;
                        // The id may have been deleted while the search ran.
                        if !index.store().is_deleted(h) {
                            r.raw_checks += 1;
                            if out.ids.first() == Some(&h) {
                                r.raw_found += 1;
                            }
                        }
                        r.resurrections += out.ids.iter().filter(|&&x| deleted[x as usize]).count();
                    }
                    _ => {
                        let row = rng.random_range(0..cfg.n_base);
                        let out = index.search(data.row(row), 10, cfg.l, seed)?;
                        r.resurrections += out.ids.iter().filter(|&&x| deleted[x as usize]).count();
                    }
                }
                r.searches += 1;
                r.ops += 1;
            }
            Ok(r)
        });
        (writer.join(), reader.join())
    });
    let (Ok(writer), Ok(reader)) = (writer, reader) else {
        bail!("invariant thread panicked");
    };
    let (w, rd) = (writer?, reader?);
    let mut report = InvariantReport {
        ops: w.ops + rd.ops,
        inserts: w.inserts,
        deletes: w.deletes,
        searches: rd.searches,
        maintenance: w.maintenance,
        raw_checks: rd.raw_checks,
        raw_found: rd.raw_found,
        resurrections: rd.resurrections,
        ..InvariantReport::default()
    };
    // Settle: one final maintenance tick, then a full never-resurrect sweep.
    let m = index.maintain()?;
    report.consolidations += usize::from(m.consolidation.is_some());
    for &h in deleted_log.lock().iter() {
        ensure!(!index.is_live(h), "deleted id {h} is live again");
    }
    index.graph().check_invariants()?;
    report.wall_secs = started.elapsed().as_secs_f64();
    Ok(report)
}
