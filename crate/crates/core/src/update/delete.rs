use std::sync::atomic::Ordering;

use crate::error::{Error, Result};
use crate::index::StreamingIndex;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeleteOutcome {
    Deleted,
    AlreadyDeleted,
}

impl StreamingIndex {
    /// Lazily deletes `h_id`: sets the bit, drops it from the hot
    /// tier, and queues in-neighbors whose deleted fraction crossed the
    /// repair threshold. No edges are rewritten.
    pub fn delete(&self, h_id: u32) -> Result<DeleteOutcome> {
        if !self.store.is_allocated(h_id) || !self.graph.contains(h_id) {
            return Err(Error::NotFound(h_id));
        }
        let _phase = self.phase.read();
        if self.store.mark_deleted(h_id)? {
            return Ok(DeleteOutcome::AlreadyDeleted);
        }
        self.live.remove(h_id);
        self.deleted_count.fetch_add(1, Ordering::AcqRel);
        self.cache.evict_vector(h_id, &self.store, &self.graph)?;
        self.repair_queue.lock().remove(&h_id);
        for v in self.graph.in_neighbors(h_id) {
            self.refresh_repair_membership(v);
        }
        Ok(DeleteOutcome::Deleted)
    }

    /// Share of `v`'s non-sentinel neighbors that are deleted.
    pub fn deleted_fraction(&self, v: u32) -> Option<f64> {
        let list = self.graph.compact_neighbors(v).ok()?;
        if list.is_empty() {
            return Some(0.0);
        }
        let dead = list.iter().filter(|&&u| self.store.is_deleted(u)).count();
        Some(dead as f64 / list.len() as f64)
    }

    pub(crate) fn needs_repair(&self, v: u32) -> bool {
        !self.store.is_deleted(v)
            && self
                .deleted_fraction(v)
                .is_some_and(|f| f > self.config.update.repair_threshold)
    }

    /// Re-evaluates whether `v` belongs in the repair queue.
    pub(crate) fn refresh_repair_membership(&self, v: u32) {
        let wanted = self.needs_repair(v);
        let mut q = self.repair_queue.lock();
        if wanted {
            q.insert(v);
        } else {
            q.remove(&v);
        }
    }

    /// Current repair queue, ascending.
    pub fn repair_queue(&self) -> Vec<u32> {
        self.repair_queue.lock().iter().copied().collect()
    }

    /// Full-scan oracle for the repair queue: every live vertex whose
    /// deleted-neighbor fraction exceeds the threshold.
    pub fn repair_candidates_full_scan(&self) -> Vec<u32> {
        self.live
            .sorted()
            .into_iter()
            .filter(|&v| self.needs_repair(v))
            .collect()
    }

    pub(crate) fn rebuild_repair_queue(&self) {
        let fresh = self.repair_candidates_full_scan();
        *self.repair_queue.lock() = fresh.into_iter().collect();
    }
}
