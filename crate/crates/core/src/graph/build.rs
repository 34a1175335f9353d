//! Static construction: exact kNN inside contiguous partitions, then a
//! cross-partition merge that beam-searches every other partition's subgraph
//! and keeps the globally nearest `R` candidates.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustc_hash::{FxHashMap, FxHashSet};

use crate::distance::{cmp_candidates, squared_l2};
use crate::error::{Error, Result};
use crate::store::Dataset;

#[derive(Debug, Clone, PartialEq)]
pub struct BuildParams {
    /// Out-degree `R`.
    pub degree: usize,
    pub partition_size: usize,
    /// Beam width used when searching foreign partitions during the merge.
    pub merge_beam: usize,
    pub seed: u64,
}

impl Default for BuildParams {
    fn default() -> Self {
        Self {
            degree: 32,
            partition_size: 32_768,
            merge_beam: 64,
            seed: 0,
        }
    }
}

/// `(distance, id)` ordered so that a max-heap pops the worst candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Scored(f32, u32);

impl Eq for Scored {}

impl Ord for Scored {
    fn cmp(&self, other: &Self) -> Ordering {
        cmp_candidates((self.0, self.1), (other.0, other.1))
    }
}

impl PartialOrd for Scored {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Keeps the `cap` best candidates seen so far.
struct TopK {
    cap: usize,
    heap: BinaryHeap<Scored>,
}

impl TopK {
    fn new(cap: usize) -> Self {
        Self {
            cap,
            heap: BinaryHeap::with_capacity(cap + 1),
        }
    }

    #[inline]
    fn bound(&self) -> Option<Scored> {
        if self.heap.len() < self.cap {
            None
        } else {
            self.heap.peek().copied()
        }
    }

    #[inline]
    fn offer(&mut self, s: Scored) {
        if self.cap == 0 {
            return;
        }
        match self.bound() {
            Some(worst) if s >= worst => {}
            _ => {
                self.heap.push(s);
                if self.heap.len() > self.cap {
                    self.heap.pop();
                }
            }
        }
    }

    fn into_sorted(self) -> Vec<Scored> {
        self.heap.into_sorted_vec()
    }
}

/// Reorders distance-ranked `candidates` by detourable path count: the number
/// of earlier candidates whose list contains the candidate. Stable, so equal
/// counts keep distance order.
pub fn detour_reorder<F, L>(candidates: &[u32], mut lists: F) -> Vec<u32>
where
    F: FnMut(u32) -> L,
    L: AsRef<[u32]>,
{
    let position: FxHashMap<u32, usize> =
        candidates.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let mut counts = vec![0u32; candidates.len()];
    for (j, &c) in candidates.iter().enumerate() {
        let list = lists(c);
        for n in list.as_ref() {
            if let Some(&i) = position.get(n) {
                if i > j {
                    counts[i] += 1;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by_key(|&i| counts[i]);
    order.into_iter().map(|i| candidates[i]).collect()
}

/// Builds neighbor lists for rows of `data`; list `i` belongs to host id
/// `i + 1` and holds host ids.
pub fn build_lists(data: &Dataset, params: &BuildParams) -> Result<Vec<Vec<u32>>> {
    let n = data.len();
    if n == 0 {
        return Err(Error::InvalidArgument("cannot build on an empty dataset".into()));
    }
    if params.degree < 2 {
        return Err(Error::InvalidArgument("degree must be at least 2".into()));
    }
    if params.partition_size < params.degree + 1 {
        return Err(Error::InvalidArgument(
            "partition size must exceed the degree".into(),
        ));
    }
    let r = params.degree;
    let parts: Vec<(usize, usize)> = (0..n)
        .step_by(params.partition_size)
        .map(|s| (s, (s + params.partition_size).min(n)))
        .collect();

    // Exact kNN within each partition, as 0-based row indices.
    let mut knn: Vec<Vec<Scored>> = Vec::with_capacity(n);
    for &(start, end) in &parts {
        knn.extend(partition_knn(data, start, end, r));
    }

    let to_hosts = |row: &[Scored]| row.iter().map(|s| s.1 + 1).collect::<Vec<u32>>();
    if parts.len() == 1 {
        let lists: Vec<Vec<u32>> = knn.iter().map(|l| to_hosts(l)).collect();
        return Ok(reorder_all(&lists));
    }

    // Pre-merge lists in 0-based row space, used as the foreign subgraphs.
    let intra: Vec<Vec<u32>> = knn
        .iter()
        .map(|l| l.iter().map(|s| s.1).collect())
        .collect();
    let mut merged = Vec::with_capacity(n);
    let mut scratch = BeamScratch::default();
    for v in 0..n {
        let query = data.row(v);
        let mut best = TopK::new(r);
        for &s in &knn[v] {
            best.offer(s);
        }
        let own = parts
            .iter()
            .position(|&(s, e)| (s..e).contains(&v))
            .expect("row belongs to a partition");
        for (q, &(start, end)) in parts.iter().enumerate() {
            if q == own {
                continue;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(
                params.seed ^ (v as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (q as u64) << 56,
            );
            let width = params.merge_beam.max(r).min(end - start);
            let mut entries = Vec::with_capacity(width);
            let mut chosen = FxHashSet::default();
            while entries.len() < width {
                let e = rng.random_range(start..end) as u32;
                if chosen.insert(e) {
                    entries.push(e);
                }
            }
            let found = scratch.search(
                &entries,
                width,
                |u| squared_l2(query, data.row(u as usize)),
                |u| &intra[u as usize],
            );
            for s in found {
                best.offer(s);
            }
        }
        merged.push(to_hosts(&best.into_sorted()));
    }

    // Detour counts use the pre-merge lists, in host-id space.
    let pre: Vec<Vec<u32>> = intra
        .iter()
        .map(|l| l.iter().map(|&u| u + 1).collect())
        .collect();
    Ok(merged
        .iter()
        .map(|c| detour_reorder(c, |h| pre[h as usize - 1].as_slice()))
        .collect())
}

fn reorder_all(lists: &[Vec<u32>]) -> Vec<Vec<u32>> {
    lists
        .iter()
        .map(|c| detour_reorder(c, |h| lists[h as usize - 1].as_slice()))
        .collect()
}

/// Exact kNN among rows `[start, end)`; each pair distance is computed once.
fn partition_knn(data: &Dataset, start: usize, end: usize, r: usize) -> Vec<Vec<Scored>> {
    let mut heaps: Vec<TopK> = (start..end).map(|_| TopK::new(r)).collect();
    for i in start..end {
        let a = data.row(i);
        for j in i + 1..end {
            let d = squared_l2(a, data.row(j));
            let si = Scored(d, j as u32);
            if heaps[i - start].bound().is_none_or(|w| si < w) {
                heaps[i - start].offer(si);
            }
            let sj = Scored(d, i as u32);
            if heaps[j - start].bound().is_none_or(|w| sj < w) {
                heaps[j - start].offer(sj);
            }
        }
    }
    heaps.into_iter().map(TopK::into_sorted).collect()
}

/// Reusable state for the merge-time beam search.
#[derive(Default)]
struct BeamScratch {
    seen: FxHashSet<u32>,
    pool: Vec<(Scored, bool)>,
}

impl BeamScratch {
    /// Best-first search from `entries` with pool width `width`; returns the
    /// final pool in ascending order.
    fn search<'a, D, N>(&mut self, entries: &[u32], width: usize, mut dist: D, lists: N) -> Vec<Scored>
    where
        D: FnMut(u32) -> f32,
        N: Fn(u32) -> &'a Vec<u32>,
    {
        self.seen.clear();
        self.pool.clear();
        for &e in entries {
            if self.seen.insert(e) {
                self.pool.push((Scored(dist(e), e), false));
            }
        }
        self.pool.sort_by(|a, b| a.0.cmp(&b.0));
        self.pool.truncate(width);
        while let Some(i) = self.pool.iter().position(|(_, visited)| !visited) {
            self.pool[i].1 = true;
            let cur = self.pool[i].0 .1;
            for &u in lists(cur) {
                if !self.seen.insert(u) {
                    continue;
                }
                let s = Scored(dist(u), u);
                if self.pool.len() == width && s >= self.pool[width - 1].0 {
                    continue;
                }
                let at = self.pool.partition_point(|(p, _)| *p < s);
                self.pool.insert(at, (s, false));
                self.pool.truncate(width);
            }
        }
        self.pool.iter().map(|(s, _)| *s).collect()
    }
}
