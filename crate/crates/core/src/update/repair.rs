use crate::distance::cmp_candidates;
use crate::error::{Error, Result};
use crate::index::StreamingIndex;

/// Outcome of one repair pass.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RepairReport {
    pub repaired: usize,
    /// Dequeued vertices that were deleted meanwhile.
    pub skipped: usize,
    /// Most replacement candidates added for a single vertex.
    pub max_candidate_edges: usize,
    pub total_candidate_edges: usize,
    pub cas_retries: usize,
}

impl StreamingIndex {
    /// Localized topology-aware repair of up to `budget` queued
    /// vertices.
    pub fn repair_affected(&self, budget: usize) -> Result<RepairReport> {
        let _phase = self.phase.read();
        let batch: Vec<u32> = {
            let mut q = self.repair_queue.lock();
            let take: Vec<u32> = q.iter().take(budget).copied().collect();
            for v in &take {
                q.remove(v);
            }
            take
        };
        let mut report = RepairReport::default();
        let mut dirty = Vec::new();
        for v in batch {
            if self.store.is_deleted(v) || !self.graph.contains(v) {
                report.skipped += 1;
                continue;
            }
            let mut attempts = 0;
            loop {
                let (list, version) = self.graph.neighbors(v)?;
                let (new_list, added) = self.repair_list(v, &list);
                match self.graph.compare_and_set(v, version, &new_list) {
                    Ok(_) => {
                        report.repaired += 1;
                        report.max_candidate_edges = report.max_candidate_edges.max(added);
                        report.total_candidate_edges += added;
                        dirty.push(v);
                        break;
                    }
                    Err(Error::VersionConflict { .. }) if attempts < 16 => {
                        attempts += 1;
                        report.cas_retries += 1;
                    }
                    Err(e) => return Err(e),
                }
            }
            self.refresh_repair_membership(v);
        }
        self.mark_dirty(&dirty);
        Ok(report)
    }

    /// New list for `v`: live neighbors plus up to `c` live members of each
    /// deleted neighbor's list, `R` nearest. Also returns the number of
    /// replacement candidates considered.
    fn repair_list(&self, v: u32, list: &[u32]) -> (Vec<u32>, usize) {
        let c = self.config.update.repair_fanout;
        let mut cands: Vec<u32> = list
            .iter()
            .copied()
            .filter(|&u| u != 0 && !self.store.is_deleted(u))
            .collect();
        let mut added = 0;
        for &p in list.iter().filter(|&&p| p != 0 && self.store.is_deleted(p)) {
            let nbrs = self.graph.compact_neighbors(p).unwrap_or_default();
            let mut taken = 0;
            for x in nbrs {
                if taken == c {
                    break;
                }
                if x == v || self.store.is_deleted(x) || cands.contains(&x) {
                    continue;
                }
                cands.push(x);
                taken += 1;
            }
            added += taken;
        }
        (self.nearest(v, &cands), added)
    }

    /// The `R` candidates nearest to `v`, ascending by `(distance, id)`.
    /// `cands` sorted by distance to `v` (ties by id).
    pub(crate) fn ranked(&self, v: u32, cands: &[u32]) -> Vec<u32> {
        let mut scored: Vec<(f32, u32)> = cands
            .iter()
            .filter_map(|&u| self.store.distance_between(v, u).ok().map(|d| (d, u)))
            .collect();
        scored.sort_by(|a, b| cmp_candidates(*a, *b));
        scored.into_iter().map(|(_, u)| u).collect()
    }

    pub(crate) fn nearest(&self, v: u32, cands: &[u32]) -> Vec<u32> {
        let mut scored: Vec<(f32, u32)> = cands
            .iter()
            .filter_map(|&u| self.store.distance_between(v, u).ok().map(|d| (d, u)))
            .collect();
        scored.sort_by(|a, b| cmp_candidates(*a, *b));
        scored
            .into_iter()
            .take(self.config.degree)
            .map(|(_, u)| u)
            .collect()
    }
}
