//! Insertion, lazy deletion, localized repair, global consolidation with the
//! multi-version merge, and cross-tier synchronization.

mod consolidate;
mod delete;
mod insert;
mod repair;
mod sync;

pub use consolidate::{
    ConsolidatedGraph, ConsolidationJob, ConsolidationOutcome, ConsolidationStart, MergeReport,
};
pub use delete::DeleteOutcome;
pub use repair::RepairReport;
pub use sync::SyncReport;

use crate::distance::cmp_candidates;
use crate::error::Result;
use crate::index::StreamingIndex;

/// What one [`StreamingIndex::maintain`] tick did.
#[derive(Debug, Clone, Default)]
pub struct MaintenanceReport {
    pub sync: SyncReport,
    pub repair: Option<RepairReport>,
    pub consolidation: Option<MergeReport>,
    pub theta: Option<f64>,
}

impl StreamingIndex {
    /// Background maintenance between operations: flushes pending tier
    /// synchronization, repairs up to `repair_budget` queued vertices (when
    /// enabled), consolidates if the trigger fires (when enabled), and
    /// closes a threshold-adaptation window if one is due.
    pub fn maintain(&self) -> Result<MaintenanceReport> {
        let update = &self.config().update;
        let mut report = MaintenanceReport::default();
        if update.repair_enabled {
            report.repair = Some(self.repair_affected(update.repair_budget)?);
        }
        if let ConsolidationOutcome::Merged(m) = self.maybe_consolidate()? {
            report.consolidation = Some(m);
        }
        report.sync = self.sync_pending();
        report.theta = self.cache().maybe_adapt();
        Ok(report)
    }
}

/// A reverse edge `v → v_new` proposed during a consolidation window, with
/// `d = dist(v, v_new)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triplet {
    pub v: u32,
    pub v_new: u32,
    pub d: f32,
}

/// Drop-farthest rule: adds `new` at distance `d` to `list` if there is room
/// or if it beats the current farthest entry, which is then dropped.
/// `dist_of` returns `None` for entries to treat as infinitely far
/// (reclaimed vectors). Returns the new list, or `None` when unchanged.
pub(crate) fn drop_farthest<F>(list: &[u32], new: u32, d: f32, degree: usize, mut dist_of: F) -> Option<Vec<u32>>
where
    F: FnMut(u32) -> Option<f32>,
{
    if list.contains(&new) {
        return None;
    }
    let mut out = list.to_vec();
    if out.len() < degree {
        out.push(new);
        return Some(out);
    }
    let (pos, far) = out
        .iter()
        .enumerate()
        .map(|(i, &u)| (i, (dist_of(u).unwrap_or(f32::INFINITY), u)))
        .max_by(|a, b| cmp_candidates(a.1, b.1))?;
    if cmp_candidates((d, new), far).is_lt() {
        out.remove(pos);
        out.push(new);
        Some(out)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drop_farthest_rule() {
        let dist = |u: u32| Some(u as f32);
        assert_eq!(drop_farthest(&[1, 2], 9, 9.0, 3, dist), Some(vec![1, 2, 9]));
        assert_eq!(drop_farthest(&[1, 5, 2], 3, 3.0, 3, dist), Some(vec![1, 2, 3]));
        assert_eq!(drop_farthest(&[1, 5, 2], 7, 7.0, 3, dist), None);
        assert_eq!(drop_farthest(&[1, 5, 2], 5, 0.0, 3, dist), None);
        // Unmeasurable (reclaimed) entries count as infinitely far.
        let with_deleted = |u: u32| if u == 1 { None } else { Some(u as f32) };
        assert_eq!(drop_farthest(&[1, 5, 2], 7, 7.0, 3, with_deleted), Some(vec![5, 2, 7]));
    }
}
