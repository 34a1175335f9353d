//! Fixed-degree proximity graph with versioned neighbor lists.
//!
//! Every vertex owns exactly `R` neighbor slots; unfilled slots hold the
//! sentinel 0 and always trail the real entries. Each committed mutation bumps
//! the vertex's version. A second set of lists, indexed by hot-slot id, holds
//! copies for hot-tier vertices together with the version they were copied
//! at; a copy is fresh iff its version equals the main list's version.
//!
//! Locking: one reader/writer lock per vertex and per hot list. Writers never
//! take another vertex lock while holding one. Presence flags, versions and
//! in-degree counters are atomics so they can be read under any lock.

mod build;
pub mod persist;

use std::sync::atomic::{AtomicBool, AtomicU32, AtomicU64, AtomicUsize, Ordering};

use parking_lot::{Mutex, RwLock};

pub use build::{build_lists, detour_reorder, BuildParams};

use crate::error::{Error, Result};
use crate::store::Dataset;

pub const SENTINEL: u32 = 0;

#[derive(Debug, Default)]
struct Vertex {
    slots: Box<[u32]>,
    version: u64,
}

#[derive(Debug, Default)]
struct HotList {
    owner: u32,
    slots: Box<[u32]>,
    version: u64,
}

/// A main-tier list copied for propagation into a hot slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StagedCopy {
    pub h_id: u32,
    pub slots: Vec<u32>,
    pub version: u64,
}

/// Outcome of committing a staged copy into a hot slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HotCommit {
    Committed,
    /// The main list advanced after staging; the copy was discarded.
    Stale,
    /// The slot no longer caches this vertex.
    Evicted,
}

/// Immutable copy of all lists at one point in time.
#[derive(Debug, Clone)]
pub struct GraphSnapshot {
    pub max_id: u32,
    /// Compacted lists indexed by host id; empty for absent vertices.
    pub lists: Vec<Vec<u32>>,
    pub present: Vec<bool>,
}

#[derive(Debug)]
pub struct VersionedGraph {
    degree: usize,
    vertices: Box<[RwLock<Vertex>]>,
    present: Box<[AtomicBool]>,
    versions: Box<[AtomicU64]>,
    in_degree: Box<[AtomicU32]>,
    in_neighbors: Box<[Mutex<Vec<u32>>]>,
    hot: Box<[RwLock<HotList>]>,
    len: AtomicUsize,
}

fn compact(slots: &[u32]) -> &[u32] {
    let n = slots.iter().position(|&s| s == SENTINEL).unwrap_or(slots.len());
    &slots[..n]
}

impl VersionedGraph {
    pub fn new(capacity: usize, degree: usize, hot_capacity: usize) -> Self {
        Self {
            degree,
            vertices: (0..=capacity).map(|_| RwLock::default()).collect(),
            present: (0..=capacity).map(|_| AtomicBool::new(false)).collect(),
            versions: (0..=capacity).map(|_| AtomicU64::new(0)).collect(),
            in_degree: (0..=capacity).map(|_| AtomicU32::new(0)).collect(),
            in_neighbors: (0..=capacity).map(|_| Mutex::default()).collect(),
            hot: (0..=hot_capacity).map(|_| RwLock::default()).collect(),
            len: AtomicUsize::new(0),
        }
    }

    /// Builds a graph over `data`, assigning host ids `1..=N` in row order.
    pub fn build(
        data: &Dataset,
        params: &BuildParams,
        capacity: usize,
        hot_capacity: usize,
    ) -> Result<Self> {
        if capacity < data.len() {
            return Err(Error::CapacityExhausted(capacity));
        }
        let lists = build_lists(data, params)?;
        let graph = Self::new(capacity, params.degree, hot_capacity);
        for i in 0..lists.len() {
            graph.add_vertex(i as u32 + 1)?;
        }
        for (i, list) in lists.iter().enumerate() {
            graph.set_neighbors(i as u32 + 1, list)?;
        }
        Ok(graph)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn capacity(&self) -> usize {
        self.vertices.len() - 1
    }

    pub fn hot_capacity(&self) -> usize {
        self.hot.len() - 1
    }

    /// Number of vertices currently present.
    pub fn len(&self) -> usize {
        self.len.load(Ordering::Acquire)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn contains(&self, h_id: u32) -> bool {
        h_id != SENTINEL
            && self
                .present
                .get(h_id as usize)
                .is_some_and(|p| p.load(Ordering::Acquire))
    }

    fn check(&self, h_id: u32) -> Result<()> {
        if self.contains(h_id) {
            Ok(())
        } else {
            Err(Error::VertexNotFound(h_id))
        }
    }

    /// Adds a vertex with an empty list at version 0.
    pub fn add_vertex(&self, h_id: u32) -> Result<()> {
        if h_id == SENTINEL || h_id as usize >= self.vertices.len() {
            return Err(Error::CapacityExhausted(self.capacity()));
        }
        let mut v = self.vertices[h_id as usize].write();
        if self.present[h_id as usize].load(Ordering::Acquire) || !v.slots.is_empty() {
            return Err(Error::InvalidArgument(format!("vertex {h_id} already added")));
        }
        v.slots = vec![SENTINEL; self.degree].into_boxed_slice();
        v.version = 0;
        self.versions[h_id as usize].store(0, Ordering::Release);
        self.present[h_id as usize].store(true, Ordering::Release);
        self.len.fetch_add(1, Ordering::AcqRel);
        Ok(())
    }

    /// Clears the list of `h_id` and removes it from the graph. The id is
    /// never reused.
    pub fn remove_vertex(&self, h_id: u32) -> Result<()> {
        self.check(h_id)?;
        let mut v = self.vertices[h_id as usize].write();
        self.commit_locked(h_id, &mut v, &[]);
        self.present[h_id as usize].store(false, Ordering::Release);
        self.len.fetch_sub(1, Ordering::AcqRel);
        Ok(())
    }

    /// Full `R`-slot list and its version.
    pub fn neighbors(&self, h_id: u32) -> Result<(Vec<u32>, u64)> {
        self.check(h_id)?;
        let v = self.vertices[h_id as usize].read();
        Ok((v.slots.to_vec(), v.version))
    }

    /// Copies the non-sentinel neighbors of `h_id` into `buf`.
    #[inline]
    pub fn neighbors_into(&self, h_id: u32, buf: &mut Vec<u32>) -> Result<u64> {
        self.check(h_id)?;
        let v = self.vertices[h_id as usize].read();
        buf.clear();
        buf.extend_from_slice(compact(&v.slots));
        Ok(v.version)
    }

    pub fn compact_neighbors(&self, h_id: u32) -> Result<Vec<u32>> {
        let mut buf = Vec::with_capacity(self.degree);
        self.neighbors_into(h_id, &mut buf)?;
        Ok(buf)
    }

    #[inline]
    pub fn version(&self, h_id: u32) -> u64 {
        self.versions
            .get(h_id as usize)
            .map_or(0, |v| v.load(Ordering::Acquire))
    }

    fn validate(&self, owner: u32, current: &[u32], ids: &[u32]) -> Result<()> {
        let reject = |reason: String| Err(Error::InvalidNeighbors { owner, reason });
        if ids.len() > self.degree {
            return reject(format!("{} entries exceed degree {}", ids.len(), self.degree));
        }
        for (i, &id) in ids.iter().enumerate() {
            if id == SENTINEL {
                return reject("sentinel inside list".into());
            }
            if id == owner {
                return reject("self-loop".into());
            }
            if ids[..i].contains(&id) {
                return reject(format!("duplicate {id}"));
            }
            // Entries carried over may point at reclaimed vertices; new ones
            // must exist.
            if !current.contains(&id) && !self.contains(id) {
                return reject(format!("unknown vertex {id}"));
            }
        }
        Ok(())
    }

    fn commit_locked(&self, h_id: u32, vertex: &mut Vertex, ids: &[u32]) -> u64 {
        let old: Vec<u32> = compact(&vertex.slots).to_vec();
        for &gone in old.iter().filter(|id| !ids.contains(id)) {
            self.in_degree[gone as usize].fetch_sub(1, Ordering::AcqRel);
            let mut ins = self.in_neighbors[gone as usize].lock();
            if let Some(pos) = ins.iter().position(|&x| x == h_id) {
                ins.swap_remove(pos);
            }
        }
        for &added in ids.iter().filter(|id| !old.contains(id)) {
            self.in_degree[added as usize].fetch_add(1, Ordering::AcqRel);
            self.in_neighbors[added as usize].lock().push(h_id);
        }
        let mut slots = vec![SENTINEL; self.degree];
        slots[..ids.len()].copy_from_slice(ids);
        vertex.slots = slots.into_boxed_slice();
        vertex.version += 1;
        self.versions[h_id as usize].store(vertex.version, Ordering::Release);
        vertex.version
    }

    /// Replaces the list of `h_id`, returning the new version.
    pub fn set_neighbors(&self, h_id: u32, ids: &[u32]) -> Result<u64> {
        self.check(h_id)?;
        let mut v = self.vertices[h_id as usize].write();
        self.validate(h_id, compact(&v.slots), ids)?;
        Ok(self.commit_locked(h_id, &mut v, ids))
    }

    /// Replaces the list only if it is still at `expected` version.
    pub fn compare_and_set(&self, h_id: u32, expected: u64, ids: &[u32]) -> Result<u64> {
        self.check(h_id)?;
        let mut v = self.vertices[h_id as usize].write();
        if v.version != expected {
            return Err(Error::VersionConflict {
                vertex: h_id,
                expected,
                found: v.version,
            });
        }
        self.validate(h_id, compact(&v.slots), ids)?;
        Ok(self.commit_locked(h_id, &mut v, ids))
    }

    /// Read-modify-write of one list under its write lock. `f` sees the
    /// compacted current list and returns the replacement, or `None` to leave
    /// it untouched. `f` must not lock other vertices.
    pub fn update_with<F>(&self, h_id: u32, f: F) -> Result<Option<u64>>
    where
        F: FnOnce(&[u32]) -> Option<Vec<u32>>,
    {
        self.check(h_id)?;
        let mut v = self.vertices[h_id as usize].write();
        let current = compact(&v.slots).to_vec();
        match f(&current) {
            Some(ids) if ids != current => {
                self.validate(h_id, &current, &ids)?;
                Ok(Some(self.commit_locked(h_id, &mut v, &ids)))
            }
            _ => Ok(None),
        }
    }

    #[inline]
    pub fn in_degree(&self, h_id: u32) -> u32 {
        self.in_degree
            .get(h_id as usize)
            .map_or(0, |d| d.load(Ordering::Acquire))
    }

    /// Vertices whose lists contain `h_id`.
    pub fn in_neighbors(&self, h_id: u32) -> Vec<u32> {
        self.in_neighbors
            .get(h_id as usize)
            .map(|l| l.lock().clone())
            .unwrap_or_default()
    }

    pub fn present_ids(&self) -> Vec<u32> {
        (1..self.vertices.len() as u32)
            .filter(|&h| self.contains(h))
            .collect()
    }

    // Hot-tier copies.

    fn hot_slot(&self, d_id: u32) -> Result<&RwLock<HotList>> {
        if d_id == SENTINEL {
            return Err(Error::SlotOutOfRange(d_id));
        }
        self.hot.get(d_id as usize).ok_or(Error::SlotOutOfRange(d_id))
    }

    /// Copies the current main list of `h_id` into hot slot `d_id`.
    pub fn load_hot(&self, d_id: u32, h_id: u32) -> Result<()> {
        let staged = self.stage_hot_copy(h_id)?;
        let mut hot = self.hot_slot(d_id)?.write();
        hot.owner = h_id;
        hot.slots = staged.slots.into_boxed_slice();
        hot.version = staged.version;
        Ok(())
    }

    pub fn clear_hot(&self, d_id: u32) -> Result<()> {
        *self.hot_slot(d_id)?.write() = HotList::default();
        Ok(())
    }

    /// Hot copy in slot `d_id`: (full slots, version, owner).
    pub fn neighbors_hot(&self, d_id: u32) -> Result<(Vec<u32>, u64, u32)> {
        let hot = self.hot_slot(d_id)?.read();
        if hot.owner == SENTINEL {
            return Err(Error::SlotFree(d_id));
        }
        Ok((hot.slots.to_vec(), hot.version, hot.owner))
    }

    /// Copies the hot list of `h_id` from slot `d_id` into `buf` if the slot
    /// still belongs to `h_id` and, unless `allow_stale`, matches the main
    /// version.
    #[inline]
    pub fn hot_neighbors_into(
        &self,
        d_id: u32,
        h_id: u32,
        allow_stale: bool,
        buf: &mut Vec<u32>,
    ) -> Option<u64> {
        let hot = self.hot.get(d_id as usize)?.read();
        if hot.owner != h_id || (!allow_stale && hot.version != self.version(h_id)) {
            return None;
        }
        buf.clear();
        buf.extend_from_slice(compact(&hot.slots));
        Some(hot.version)
    }

    pub fn hot_is_fresh(&self, d_id: u32, h_id: u32) -> bool {
        self.hot
            .get(d_id as usize)
            .map(|h| {
                let h_list = h.read();
                h_list.owner == h_id && h_list.version == self.version(h_id)
            })
            .unwrap_or(false)
    }

    pub fn stage_hot_copy(&self, h_id: u32) -> Result<StagedCopy> {
        self.check(h_id)?;
        let v = self.vertices[h_id as usize].read();
        Ok(StagedCopy {
            h_id,
            slots: v.slots.to_vec(),
            version: v.version,
        })
    }

    /// Installs a staged copy unless the main list moved on since staging.
    pub fn commit_hot_copy(&self, d_id: u32, staged: StagedCopy) -> Result<HotCommit> {
        let mut hot = self.hot_slot(d_id)?.write();
        if hot.owner != staged.h_id {
            return Ok(HotCommit::Evicted);
        }
        if self.version(staged.h_id) != staged.version {
            return Ok(HotCommit::Stale);
        }
        hot.slots = staged.slots.into_boxed_slice();
        hot.version = staged.version;
        Ok(HotCommit::Committed)
    }

    /// Copies every present list with id `<= max_id`.
    pub fn snapshot(&self, max_id: u32) -> GraphSnapshot {
        let n = (max_id as usize).min(self.capacity());
        let mut lists = vec![Vec::new(); n + 1];
        let mut present = vec![false; n + 1];
        for h in 1..=n {
            if self.contains(h as u32) {
                let v = self.vertices[h].read();
                lists[h] = compact(&v.slots).to_vec();
                present[h] = true;
            }
        }
        GraphSnapshot {
            max_id: n as u32,
            lists,
            present,
        }
    }

    /// Full scan of the structural invariants. Test support; O(N·R).
    pub fn check_invariants(&self) -> Result<()> {
        let cap = self.capacity();
        let mut counts = vec![0u32; cap + 1];
        let mut sources: Vec<Vec<u32>> = vec![Vec::new(); cap + 1];
        let fail = |msg: String| Err(Error::InvalidArgument(msg));
        for h in 1..=cap {
            let v = self.vertices[h].read();
            if !self.contains(h as u32) {
                if v.slots.iter().any(|&s| s != SENTINEL) {
                    return fail(format!("absent vertex {h} has neighbors"));
                }
                continue;
            }
            if v.slots.len() != self.degree {
                return fail(format!("vertex {h} has {} slots", v.slots.len()));
            }
            let live = compact(&v.slots);
            if v.slots[live.len()..].iter().any(|&s| s != SENTINEL) {
                return fail(format!("vertex {h} has a sentinel before a real entry"));
            }
            for (i, &n) in live.iter().enumerate() {
                if n as usize == h || live[..i].contains(&n) {
                    return fail(format!("vertex {h} has a self-loop or duplicate {n}"));
                }
                counts[n as usize] += 1;
                sources[n as usize].push(h as u32);
            }
            if self.versions[h].load(Ordering::Acquire) != v.version {
                return fail(format!("vertex {h} version mirror out of sync"));
            }
        }
        for h in 1..=cap {
            if self.in_degree[h].load(Ordering::Acquire) != counts[h] {
                return fail(format!(
                    "in-degree of {h}: counter {} vs recount {}",
                    self.in_degree[h].load(Ordering::Acquire),
                    counts[h]
                ));
            }
            let mut recorded = self.in_neighbors[h].lock().clone();
            recorded.sort_unstable();
            if recorded != sources[h] {
                return fail(format!("in-neighbor index of {h} is inconsistent"));
            }
        }
        Ok(())
    }
}
