//! Bounded candidate pool driving the beam search.

use rustc_hash::FxHashSet;

use crate::distance::cmp_candidates;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoolEntry {
    pub id: u32,
    pub dist: f32,
    pub visited: bool,
}

/// Up to `capacity` entries sorted by `(distance, id)`, plus the set of every
/// id ever offered.
#[derive(Debug, Clone)]
pub struct CandidatePool {
    capacity: usize,
    entries: Vec<PoolEntry>,
    seen: FxHashSet<u32>,
    /// No unvisited entry sits before this index.
    cursor: usize,
}

impl CandidatePool {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            entries: Vec::with_capacity(capacity + 1),
            seen: FxHashSet::default(),
            cursor: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[PoolEntry] {
        &self.entries
    }

    pub fn clear(&mut self) {
        self.entries.clear();
        self.seen.clear();
        self.cursor = 0;
    }

    /// Marks `id` as offered; false if it was seen before.
    #[inline]
    pub fn first_visit(&mut self, id: u32) -> bool {
        self.seen.insert(id)
    }

    pub fn was_seen(&self, id: u32) -> bool {
        self.seen.contains(&id)
    }

    /// Offers one scored id not currently in the pool; returns whether it
    /// was retained. The search guarantees uniqueness through the seen set.
    #[inline]
    pub fn insert_new(&mut self, id: u32, dist: f32) -> bool {
        if self.capacity == 0 {
            return false;
        }
        let key = (dist, id);
        if self.entries.len() == self.capacity {
            let last = self.entries[self.capacity - 1];
            if cmp_candidates(key, (last.dist, last.id)).is_ge() {
                return false;
            }
        }
        let at = self
            .entries
            .partition_point(|e| cmp_candidates((e.dist, e.id), key).is_lt());
        self.entries.insert(
            at,
            PoolEntry {
                id,
                dist,
                visited: false,
            },
        );
        self.entries.truncate(self.capacity);
        self.cursor = self.cursor.min(at);
        true
    }

    /// Merges scored ids, keeping the nearest `capacity`. Returns whether
    /// the retained entries changed.
    pub fn update(&mut self, scored: &[(u32, f32)]) -> bool {
        let mut changed = false;
        for &(id, dist) in scored {
            if !self.entries.iter().any(|e| e.id == id) {
                changed |= self.insert_new(id, dist);
            }
        }
        changed
    }

    /// Marks and returns the nearest unvisited entry.
    #[inline]
    pub fn next_unvisited(&mut self) -> Option<PoolEntry> {
        while self.cursor < self.entries.len() {
            let e = &mut self.entries[self.cursor];
            if !e.visited {
                e.visited = true;
                return Some(*e);
            }
            self.cursor += 1;
        }
        None
    }

    /// The `k` nearest entries.
    pub fn top(&self, k: usize) -> &[PoolEntry] {
        &self.entries[..k.min(self.entries.len())]
    }
}
