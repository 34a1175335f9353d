//! Tiered vector storage.
//!
//! Vectors live in the main tier, addressed by host id (`h_id`, allocated
//! monotonically from 1). A bounded hot tier of `M` preallocated slots caches a
//! subset of them under device ids (`d_id` in `1..=M`), and an optional spill
//! file holds vectors demoted out of the main tier. Id 0 is the NONE sentinel
//! on both sides.
//!
//! The hot tier is split into `S` segments; slot `d` belongs to segment
//! `(d - 1) % S` and a vector `h` may only be cached in segment `h % S`.
//! Mapping mutations take the segment's write lock. Lookups of the mapping
//! table and the deletion bitset are lock-free.

mod bitset;
mod spill;
pub mod vecs;

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU32, Ordering};

use parking_lot::{Mutex, RwLock};

pub use bitset::AtomicBitset;
pub use spill::SpillFile;
pub use vecs::{read_ivecs, read_vectors, write_fvecs, write_ivecs, Dataset};

use crate::distance::squared_l2;
use crate::error::{Error, Result};

/// Where a read was served from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tier {
    Hot,
    Main,
    Disk,
}

#[derive(Debug, Clone)]
pub struct StoreConfig {
    pub dim: usize,
    /// Maximum number of vectors ever allocated.
    pub capacity: usize,
    /// Hot-tier slot count `M`.
    pub hot_capacity: usize,
    pub hot_segments: usize,
    pub spill_path: Option<PathBuf>,
}

#[derive(Debug)]
enum Slot {
    Resident(Box<[f32]>),
    Spilled,
    Reclaimed,
}

#[derive(Debug)]
struct HotSegment {
    /// Occupant host id per local slot, 0 when free.
    occupants: Vec<u32>,
    data: Vec<f32>,
    free: BTreeSet<u32>,
}

#[derive(Debug)]
pub struct TieredStore {
    dim: usize,
    capacity: usize,
    hot_capacity: usize,
    main: RwLock<Vec<Slot>>,
    segments: Box<[RwLock<HotSegment>]>,
    mapping: Box<[AtomicU32]>,
    spill: Option<Mutex<SpillFile>>,
    deleted: AtomicBitset,
    deletion_lock: Mutex<()>,
}

impl TieredStore {
    pub fn new(config: &StoreConfig) -> Result<Self> {
        if config.dim == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        let segments = config.hot_segments.max(1);
        let dim = config.dim;
        let segs = (0..segments)
            .map(|s| {
                let slots = if config.hot_capacity > s {
                    (config.hot_capacity - s).div_ceil(segments)
                } else {
                    0
                };
                let free = (0..slots)
                    .map(|local| (local * segments + s + 1) as u32)
                    .collect();
                RwLock::new(HotSegment {
                    occupants: vec![0; slots],
                    data: vec![0.0; slots * dim],
                    free,
                })
            })
            .collect();
        let spill = match &config.spill_path {
            Some(path) => Some(Mutex::new(SpillFile::create(path, dim)?)),
            None => None,
        };
        let mut main = Vec::with_capacity(config.capacity.min(1 << 20) + 1);
        main.push(Slot::Reclaimed);
        Ok(Self {
            dim,
            capacity: config.capacity,
            hot_capacity: config.hot_capacity,
            main: RwLock::new(main),
            segments: segs,
            mapping: (0..=config.capacity).map(|_| AtomicU32::new(0)).collect(),
            spill,
            deleted: AtomicBitset::new(config.capacity + 1),
            deletion_lock: Mutex::new(()),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn hot_capacity(&self) -> usize {
        self.hot_capacity
    }

    pub fn hot_segments(&self) -> usize {
        self.segments.len()
    }

    /// Highest allocated host id (0 when empty).
    pub fn max_id(&self) -> u32 {
        (self.main.read().len() - 1) as u32
    }

    pub fn alloc_vector(&self, components: &[f32]) -> Result<u32> {
        if components.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: components.len(),
            });
        }
        let mut main = self.main.write();
        let id = main.len();
        if id > self.capacity {
            return Err(Error::CapacityExhausted(self.capacity));
        }
        main.push(Slot::Resident(components.into()));
        Ok(id as u32)
    }

    fn check_allocated(&self, h_id: u32, len: usize) -> Result<()> {
        if h_id == 0 || h_id as usize >= len {
            Err(Error::NotFound(h_id))
        } else {
            Ok(())
        }
    }

    pub fn is_allocated(&self, h_id: u32) -> bool {
        h_id != 0 && (h_id as usize) < self.main.read().len()
    }

    /// Hot slot currently caching `h_id`.
    #[inline]
    pub fn mapping(&self, h_id: u32) -> Option<u32> {
        match self.mapping.get(h_id as usize)?.load(Ordering::Acquire) {
            0 => None,
            d => Some(d),
        }
    }

    fn locate(&self, d_id: u32) -> Result<(usize, usize)> {
        if d_id == 0 || d_id as usize > self.hot_capacity {
            return Err(Error::SlotOutOfRange(d_id));
        }
        let s = self.segments.len();
        let idx = d_id as usize - 1;
        Ok((idx % s, idx / s))
    }

    pub fn reverse_mapping(&self, d_id: u32) -> Result<Option<u32>> {
        let (seg, local) = self.locate(d_id)?;
        Ok(match self.segments[seg].read().occupants[local] {
            0 => None,
            h => Some(h),
        })
    }

    /// Segment a vector may be cached in.
    #[inline]
    pub fn segment_of_vector(&self, h_id: u32) -> usize {
        h_id as usize % self.segments.len()
    }

    pub fn segment_of_slot(&self, d_id: u32) -> Result<usize> {
        Ok(self.locate(d_id)?.0)
    }

    /// Slots of segment `seg` with their occupants, in ascending d_id order.
    pub fn segment_slots(&self, seg: usize) -> Vec<(u32, Option<u32>)> {
        let s = self.segments.len();
        let guard = self.segments[seg].read();
        guard
            .occupants
            .iter()
            .enumerate()
            .map(|(local, &h)| (Self::slot_of(s, seg, local), (h != 0).then_some(h)))
            .collect()
    }

    fn slot_of(segments: usize, seg: usize, local: usize) -> u32 {
        (local * segments + seg + 1) as u32
    }

    /// Slot id of position `local` within segment `seg`.
    pub fn slot_id(&self, seg: usize, local: usize) -> u32 {
        Self::slot_of(self.segments.len(), seg, local)
    }

    /// Number of slots in segment `seg`.
    pub fn segment_len(&self, seg: usize) -> usize {
        self.segments[seg].read().occupants.len()
    }

    /// Lowest free slot of segment `seg`.
    pub fn free_slot(&self, seg: usize) -> Option<u32> {
        self.segments[seg].read().free.first().copied()
    }

    pub fn cached_count(&self) -> usize {
        self.segments
            .iter()
            .map(|s| {
                let g = s.read();
                g.occupants.len() - g.free.len()
            })
            .sum()
    }

    /// Copies the current bytes of `h_id` from main or spill, restoring a
    /// spilled vector into the main tier first.
    fn stage_for_promotion(&self, h_id: u32) -> Result<Box<[f32]>> {
        {
            let main = self.main.read();
            self.check_allocated(h_id, main.len())?;
            match &main[h_id as usize] {
                Slot::Resident(v) => return Ok(v.clone()),
                Slot::Reclaimed => return Err(Error::Reclaimed(h_id)),
                Slot::Spilled => {}
            }
        }
        let mut main = self.main.write();
        if let Slot::Resident(v) = &main[h_id as usize] {
            return Ok(v.clone());
        }
        let spill = self.spill.as_ref().ok_or(Error::SpillNotConfigured)?;
        let mut spill = spill.lock();
        let bytes: Box<[f32]> = spill
            .read(h_id)?
            .ok_or(Error::NotFound(h_id))?
            .into_boxed_slice();
        spill.remove(h_id);
        main[h_id as usize] = Slot::Resident(bytes.clone());
        Ok(bytes)
    }

    fn install(&self, seg: &mut HotSegment, local: usize, d_id: u32, h_id: u32, bytes: &[f32]) {
        seg.data[local * self.dim..(local + 1) * self.dim].copy_from_slice(bytes);
        seg.occupants[local] = h_id;
        seg.free.remove(&d_id);
        self.mapping[h_id as usize].store(d_id, Ordering::Release);
    }

    fn check_promotable(&self, h_id: u32, d_id: u32) -> Result<()> {
        if self.mapping(h_id).is_some() {
            return Err(Error::AlreadyCached(h_id));
        }
        let (seg, _) = self.locate(d_id)?;
        if seg != self.segment_of_vector(h_id) {
            return Err(Error::InvalidArgument(format!(
                "vector {h_id} belongs to segment {}, slot {d_id} to segment {seg}",
                self.segment_of_vector(h_id)
            )));
        }
        Ok(())
    }

    /// Copies the main-tier bytes of `h_id` into free slot `d_id`.
    pub fn promote(&self, h_id: u32, d_id: u32) -> Result<()> {
        self.check_promotable(h_id, d_id)?;
        let (seg, local) = self.locate(d_id)?;
        let bytes = self.stage_for_promotion(h_id)?;
        let mut guard = self.segments[seg].write();
        if guard.occupants[local] != 0 {
            return Err(Error::SlotOccupied(d_id));
        }
        if self.mapping(h_id).is_some() {
            return Err(Error::AlreadyCached(h_id));
        }
        self.install(&mut guard, local, d_id, h_id, &bytes);
        Ok(())
    }

    /// Clears slot `d_id`, returning its former occupant.
    pub fn evict(&self, d_id: u32) -> Result<u32> {
        let (seg, local) = self.locate(d_id)?;
        let mut guard = self.segments[seg].write();
        let h_id = guard.occupants[local];
        if h_id == 0 {
            return Err(Error::SlotFree(d_id));
        }
        guard.occupants[local] = 0;
        guard.free.insert(d_id);
        self.mapping[h_id as usize].store(0, Ordering::Release);
        Ok(h_id)
    }

    /// Evicts the occupant of `d_id` and promotes `h_id` into it in one step.
    pub fn replace(&self, d_id: u32, h_id: u32) -> Result<u32> {
        self.check_promotable(h_id, d_id)?;
        let (seg, local) = self.locate(d_id)?;
        let bytes = self.stage_for_promotion(h_id)?;
        let mut guard = self.segments[seg].write();
        let old = guard.occupants[local];
        if old == 0 {
            return Err(Error::SlotFree(d_id));
        }
        if self.mapping(h_id).is_some() {
            return Err(Error::AlreadyCached(h_id));
        }
        self.mapping[old as usize].store(0, Ordering::Release);
        self.install(&mut guard, local, d_id, h_id, &bytes);
        Ok(old)
    }

    /// Returns the vector bytes and the tier that served them.
    pub fn get_vector(&self, h_id: u32) -> Result<(Vec<f32>, Tier)> {
        if let Some(d_id) = self.mapping(h_id) {
            let (seg, local) = self.locate(d_id)?;
            let guard = self.segments[seg].read();
            if guard.occupants[local] == h_id {
                let v = guard.data[local * self.dim..(local + 1) * self.dim].to_vec();
                return Ok((v, Tier::Hot));
            }
        }
        self.read_cold(h_id, |v| v.to_vec())
    }

    /// Runs `f` on the main-tier or spilled bytes of `h_id`.
    fn read_cold<R>(&self, h_id: u32, f: impl FnOnce(&[f32]) -> R) -> Result<(R, Tier)> {
        {
            let main = self.main.read();
            self.check_allocated(h_id, main.len())?;
            match &main[h_id as usize] {
                Slot::Resident(v) => return Ok((f(v), Tier::Main)),
                Slot::Reclaimed => return Err(Error::Reclaimed(h_id)),
                Slot::Spilled => {}
            }
        }
        let spill = self.spill.as_ref().ok_or(Error::SpillNotConfigured)?;
        let bytes = spill.lock().read(h_id)?;
        match bytes {
            Some(v) => Ok((f(&v), Tier::Disk)),
            // Restored into main between the two reads.
            None => self.read_cold(h_id, f),
        }
    }

    /// Distance from `query` to the hot copy in `d_id`, if it still holds `h_id`.
    #[inline]
    pub fn distance_hot(&self, d_id: u32, h_id: u32, query: &[f32]) -> Option<f32> {
        let (seg, local) = self.locate(d_id).ok()?;
        let guard = self.segments[seg].read();
        (guard.occupants[local] == h_id)
            .then(|| squared_l2(query, &guard.data[local * self.dim..(local + 1) * self.dim]))
    }

    /// Distance from `query` to the main-tier (or spilled) copy of `h_id`.
    #[inline]
    pub fn distance_cold(&self, h_id: u32, query: &[f32]) -> Result<(f32, Tier)> {
        self.read_cold(h_id, |v| squared_l2(query, v))
    }

    /// Distance between two stored vectors, read from their authoritative copies.
    pub fn distance_between(&self, a: u32, b: u32) -> Result<f32> {
        let (va, _) = self.read_cold(a, |v| v.to_vec())?;
        Ok(self.distance_cold(b, &va)?.0)
    }

    /// Sets the deletion bit. Returns `true` if the id was already deleted.
    pub fn mark_deleted(&self, h_id: u32) -> Result<bool> {
        let len = self.main.read().len();
        self.check_allocated(h_id, len)?;
        let _exclusive = self.deletion_lock.lock();
        Ok(self.deleted.set(h_id as usize))
    }

    #[inline]
    pub fn is_deleted(&self, h_id: u32) -> bool {
        self.deleted.get(h_id as usize)
    }

    pub fn deleted_total(&self) -> usize {
        self.deleted.count_ones()
    }

    /// Moves the given vectors from the main tier to the spill file.
    pub fn demote_to_disk(&self, h_ids: &[u32]) -> Result<usize> {
        let spill = self.spill.as_ref().ok_or(Error::SpillNotConfigured)?;
        if h_ids.is_empty() {
            return Ok(0);
        }
        let mut main = self.main.write();
        for &h in h_ids {
            self.check_allocated(h, main.len())?;
            if self.mapping(h).is_some() {
                return Err(Error::HotVector(h));
            }
        }
        let mut spill = spill.lock();
        let mut count = 0;
        for &h in h_ids {
            if let Slot::Resident(v) = &main[h as usize] {
                spill.write(h, v)?;
                main[h as usize] = Slot::Spilled;
                count += 1;
            }
        }
        Ok(count)
    }

    pub fn tier_of(&self, h_id: u32) -> Result<Tier> {
        if self.mapping(h_id).is_some() {
            return Ok(Tier::Hot);
        }
        let main = self.main.read();
        self.check_allocated(h_id, main.len())?;
        match main[h_id as usize] {
            Slot::Resident(_) => Ok(Tier::Main),
            Slot::Spilled => Ok(Tier::Disk),
            Slot::Reclaimed => Err(Error::Reclaimed(h_id)),
        }
    }

    /// Releases all storage for a deleted vector.
    pub fn reclaim(&self, h_id: u32) -> Result<()> {
        if !self.is_deleted(h_id) {
            return Err(Error::InvalidArgument(format!(
                "vector {h_id} is live and cannot be reclaimed"
            )));
        }
        if let Some(d_id) = self.mapping(h_id) {
            let _ = self.evict(d_id);
        }
        let mut main = self.main.write();
        self.check_allocated(h_id, main.len())?;
        if matches!(main[h_id as usize], Slot::Spilled) {
            if let Some(spill) = &self.spill {
                spill.lock().remove(h_id);
            }
        }
        main[h_id as usize] = Slot::Reclaimed;
        Ok(())
    }

    pub fn is_reclaimed(&self, h_id: u32) -> bool {
        let main = self.main.read();
        matches!(main.get(h_id as usize), Some(Slot::Reclaimed)) && h_id != 0
    }

    /// Checks the mapping/reverse-mapping bijection. Test support.
    pub fn check_mapping_invariants(&self) -> Result<usize> {
        let mut cached = 0;
        for seg in 0..self.segments.len() {
            for (d, occupant) in self.segment_slots(seg) {
                if let Some(h) = occupant {
                    cached += 1;
                    if self.mapping(h) != Some(d) {
                        return Err(Error::InvalidArgument(format!(
                            "slot {d} holds {h} but mapping({h}) = {:?}",
                            self.mapping(h)
                        )));
                    }
                }
            }
        }
        let mapped = self
            .mapping
            .iter()
            .filter(|m| m.load(Ordering::Acquire) != 0)
            .count();
        if mapped != cached || cached > self.hot_capacity {
            return Err(Error::InvalidArgument(format!(
                "{mapped} mapped ids vs {cached} occupied slots (M = {})",
                self.hot_capacity
            )));
        }
        Ok(cached)
    }
}
