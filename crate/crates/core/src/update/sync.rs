use crate::graph::HotCommit;
use crate::index::StreamingIndex;

/// Outcome of propagating list changes to hot copies.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SyncReport {
    pub synced: usize,
    /// Dirty vertices that are not cached.
    pub skipped: usize,
    /// Copies discarded because the main list advanced mid-copy.
    pub retries: usize,
    pub batches: usize,
}

impl SyncReport {
    fn absorb(&mut self, other: SyncReport) {
        self.synced += other.synced;
        self.skipped += other.skipped;
        self.retries += other.retries;
        self.batches += other.batches;
    }
}

impl StreamingIndex {
    /// Queues vertices whose main lists changed.
    pub(crate) fn mark_dirty(&self, ids: &[u32]) {
        if ids.is_empty() {
            return;
        }
        let mut pending = self.pending_sync.lock();
        for &h in ids {
            if self.store.mapping(h).is_some() {
                pending.insert(h);
            }
        }
    }

    pub fn pending_sync_len(&self) -> usize {
        self.pending_sync.lock().len()
    }

    /// Overwrites the hot copies of `dirty` from the main tier, in batches of
    /// `sync_batch`. A copy whose main list advanced mid-copy is retried.
    /// Does nothing while sync is disabled.
    pub fn sync_tiers(&self, dirty: &[u32]) -> SyncReport {
        let mut report = SyncReport::default();
        if self.sync_disabled() {
            return report;
        }
        for batch in dirty.chunks(self.config.update.sync_batch) {
            report.batches += 1;
            for &h in batch {
                let Some(d) = self.store.mapping(h) else {
                    report.skipped += 1;
                    continue;
                };
                loop {
                    let Ok(staged) = self.graph.stage_hot_copy(h) else {
                        report.skipped += 1;
                        break;
                    };
                    match self.graph.commit_hot_copy(d, staged) {
                        Ok(HotCommit::Committed) => {
                            report.synced += 1;
                            break;
                        }
                        Ok(HotCommit::Stale) => report.retries += 1,
                        Ok(HotCommit::Evicted) | Err(_) => {
                            report.skipped += 1;
                            break;
                        }
                    }
                }
            }
        }
        report
    }

    /// Drains every queued vertex through [`sync_tiers`](Self::sync_tiers).
    pub fn sync_pending(&self) -> SyncReport {
        let mut total = SyncReport::default();
        if self.sync_disabled() {
            return total;
        }
        loop {
            let batch: Vec<u32> = {
                let mut pending = self.pending_sync.lock();
                let take: Vec<u32> = pending
                    .iter()
                    .take(self.config.update.sync_batch)
                    .copied()
                    .collect();
                for h in &take {
                    pending.remove(h);
                }
                take
            };
            if batch.is_empty() {
                return total;
            }
            total.absorb(self.sync_tiers(&batch));
        }
    }
}
