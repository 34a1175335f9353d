use std::sync::atomic::Ordering;
use std::sync::Arc;
use std::thread::JoinHandle;

use rustc_hash::FxHashSet;

use crate::error::Result;
use crate::graph::{detour_reorder, GraphSnapshot};
use crate::index::StreamingIndex;

use super::{drop_farthest, Triplet};

/// A snapshot `G_t0` taken at the start of a consolidation window.
#[derive(Debug, Clone)]
pub struct ConsolidationJob {
    pub snapshot: GraphSnapshot,
    /// Deletion bits at snapshot time, indexed by host id.
    pub deleted: Vec<bool>,
}

/// `G'_t0`: the snapshot with every live vertex's deleted neighbors
/// replaced.
#[derive(Debug, Clone)]
pub struct ConsolidatedGraph {
    pub max_id: u32,
    pub lists: Vec<Vec<u32>>,
    pub deleted: Vec<bool>,
    /// Vertices whose lists were rebuilt.
    pub rebuilt: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MergeReport {
    /// Snapshot-deleted vertices whose storage was released.
    pub reclaimed: usize,
    pub rebuilt: usize,
    /// Vertices inserted during the window, kept with their lists.
    pub appended: usize,
    /// Lists that differed from the active graph and were rewritten.
    pub committed: usize,
    pub triplets_applied: usize,
    pub triplets_dominated: usize,
    /// Triplets with a deleted endpoint.
    pub triplets_dropped: usize,
    /// The reverse log replayed by this merge.
    pub log: Vec<Triplet>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConsolidationOutcome {
    NotTriggered,
    /// Version bound reached; retried on a later tick.
    Deferred,
    Merged(MergeReport),
}

/// Result of trying to open a consolidation window.
#[derive(Debug)]
pub enum ConsolidationStart {
    Started(ConsolidationJob),
    NotTriggered,
    Deferred,
}

impl StreamingIndex {
    /// Deleted share of the live + unreclaimed-deleted population.
    pub fn deleted_ratio(&self) -> f64 {
        let deleted = self.deleted_count() as f64;
        let total = deleted + self.live_count() as f64;
        if total == 0.0 {
            0.0
        } else {
            deleted / total
        }
    }

    pub fn consolidation_due(&self) -> bool {
        self.deleted_ratio() > self.config.update.consolidation_threshold
    }

    pub fn consolidation_active(&self) -> bool {
        self.snapshots_active.load(Ordering::Acquire) > 0
    }

    /// Takes `G_t0` in a brief exclusive window and opens the reverse log.
    /// `force` skips the deletion-ratio trigger.
    pub fn begin_consolidation(&self, force: bool) -> Result<ConsolidationStart> {
        if !force && !self.consolidation_due() {
            return Ok(ConsolidationStart::NotTriggered);
        }
        let _phase = self.phase.write();
        // One active graph plus at most `version_bound - 1` snapshots; this
        // implementation keeps at most one window open.
        let allowed = self.config.update.version_bound.saturating_sub(1).min(1);
        if self.snapshots_active.load(Ordering::Acquire) >= allowed {
            return Ok(ConsolidationStart::Deferred);
        }
        let max_id = self.store.max_id();
        let snapshot = self.graph.snapshot(max_id);
        let deleted = (0..=max_id).map(|h| h != 0 && self.store.is_deleted(h)).collect();
        self.window.lock().log.clear();
        self.snapshots_active.fetch_add(1, Ordering::AcqRel);
        self.window_max_id.store(max_id.max(1), Ordering::Release);
        Ok(ConsolidationStart::Started(ConsolidationJob { snapshot, deleted }))
    }

    /// Builds `G'_t0` from the snapshot without touching the active graph:
    /// each live vertex with a deleted neighbor is rebuilt from its live
    /// neighbors and the live members of its deleted neighbors' lists.
    pub fn run_consolidation(&self, job: &ConsolidationJob) -> ConsolidatedGraph {
        let snap = &job.snapshot;
        let dead = |h: u32| job.deleted.get(h as usize).copied().unwrap_or(false);
        let mut lists = snap.lists.clone();
        let mut rebuilt = 0;
        for v in 1..=snap.max_id {
            let vi = v as usize;
            if !snap.present[vi] {
                continue;
            }
            if dead(v) {
                lists[vi].clear();
                continue;
            }
            let list = &snap.lists[vi];
            if !list.iter().any(|&u| dead(u)) {
                continue;
            }
            let mut seen: FxHashSet<u32> = FxHashSet::default();
            let mut cands = Vec::new();
            for &u in list.iter().filter(|&&u| !dead(u)) {
                if seen.insert(u) {
                    cands.push(u);
                }
            }
            for &p in list.iter().filter(|&&p| dead(p)) {
                let Some(nbrs) = snap.lists.get(p as usize) else { continue };
                for &x in nbrs {
                    if x != v && !dead(x) && seen.insert(x) {
                        cands.push(x);
                    }
                }
            }
            // Distance-ranked candidates, reordered by detourable path count
            // before keeping `R`, as insertion does.
            let ranked = self.ranked(v, &cands);
            let mut list = detour_reorder(&ranked, |c| snap.lists[c as usize].as_slice());
            list.truncate(self.config.degree);
            lists[vi] = list;
            rebuilt += 1;
        }
        ConsolidatedGraph {
            max_id: snap.max_id,
            lists,
            deleted: job.deleted.clone(),
            rebuilt,
        }
    }

    /// Folds `G'_t0` into the active graph in a brief exclusive window:
    /// pre-window vertices take their consolidated lists, vertices inserted
    /// during the window keep theirs, logged reverse edges are re-applied
    /// with the drop-farthest rule, and snapshot-deleted vertices are
    /// reclaimed.
    pub fn merge_versions(&self, merged: ConsolidatedGraph) -> Result<MergeReport> {
        let _phase = self.phase.write();
        let r = self.config.degree;
        let log = std::mem::take(&mut self.window.lock().log);
        let mut report = MergeReport {
            rebuilt: merged.rebuilt,
            ..MergeReport::default()
        };
        let was_deleted = |h: u32| merged.deleted.get(h as usize).copied().unwrap_or(false);
        let mut lists = merged.lists;

        for t in &log {
            let old_live = (t.v as usize) < lists.len() && !was_deleted(t.v);
            if !old_live
                || self.store.is_deleted(t.v)
                || self.store.is_deleted(t.v_new)
                || !self.graph.contains(t.v_new)
            {
                report.triplets_dropped += 1;
                continue;
            }
            let v = t.v;
            let current = &lists[v as usize];
            let updated = drop_farthest(current, t.v_new, t.d, r, |x| {
                if self.store.is_deleted(x) {
                    None
                } else {
                    self.store.distance_between(v, x).ok()
                }
            });
            match updated {
                Some(l) => {
                    lists[v as usize] = l;
                    report.triplets_applied += 1;
                }
                None => report.triplets_dominated += 1,
            }
        }

        let mut dirty = Vec::new();
        for v in 1..=merged.max_id {
            if was_deleted(v) || !self.graph.contains(v) {
                continue;
            }
            let list = &lists[v as usize];
            if self.graph.compact_neighbors(v)? != *list {
                self.graph.set_neighbors(v, list)?;
                report.committed += 1;
                dirty.push(v);
            }
        }
        for v in 1..=merged.max_id {
            if !was_deleted(v) || !self.graph.contains(v) {
                continue;
            }
            self.cache.evict_vector(v, &self.store, &self.graph)?;
            self.graph.remove_vertex(v)?;
            self.store.reclaim(v)?;
            report.reclaimed += 1;
        }
        report.appended = (merged.max_id + 1..=self.store.max_id())
            .filter(|&h| self.graph.contains(h))
            .count();
        self.deleted_count.fetch_sub(report.reclaimed, Ordering::AcqRel);
        self.window_max_id.store(0, Ordering::Release);
        self.snapshots_active.fetch_sub(1, Ordering::AcqRel);
        self.rebuild_repair_queue();
        self.mark_dirty(&dirty);
        report.log = log;
        Ok(report)
    }

    /// Runs a whole consolidation synchronously if the trigger fires.
    pub fn maybe_consolidate(&self) -> Result<ConsolidationOutcome> {
        if !self.config.update.consolidation_enabled {
            return Ok(ConsolidationOutcome::NotTriggered);
        }
        self.consolidate(false)
    }

    /// Runs a whole consolidation; `force` skips the trigger.
    pub fn consolidate(&self, force: bool) -> Result<ConsolidationOutcome> {
        match self.begin_consolidation(force)? {
            ConsolidationStart::NotTriggered => Ok(ConsolidationOutcome::NotTriggered),
            ConsolidationStart::Deferred => Ok(ConsolidationOutcome::Deferred),
            ConsolidationStart::Started(job) => {
                let merged = self.run_consolidation(&job);
                Ok(ConsolidationOutcome::Merged(self.merge_versions(merged)?))
            }
        }
    }

    /// Opens a window now and rebuilds on a background thread; foreground
    /// operations continue on the active graph until the merge.
    pub fn spawn_consolidation(
        self: &Arc<Self>,
        force: bool,
    ) -> Result<Option<JoinHandle<Result<MergeReport>>>> {
        match self.begin_consolidation(force)? {
            ConsolidationStart::Started(job) => {
                let index = Arc::clone(self);
                Ok(Some(std::thread::spawn(move || {
                    let merged = index.run_consolidation(&job);
                    index.merge_versions(merged)
                })))
            }
            _ => Ok(None),
        }
    }
}
