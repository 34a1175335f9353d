//! Exact nearest neighbors by exhaustive scan, plus an incrementally
//! maintained variant for a fixed query set under inserts and deletes.

use std::cmp::Ordering;

use tierann::distance::{cmp_candidates, squared_l2};
use tierann::store::Dataset;

fn by_distance(a: &(f32, u32), b: &(f32, u32)) -> Ordering {
    cmp_candidates(*a, *b)
}

/// Exact top-`k` of `query` over `(id, vector)` pairs, ascending by
/// `(distance, id)`.
pub fn exact_top_k<'a, I>(query: &[f32], items: I, k: usize) -> Vec<(u32, f32)>
where
    I: IntoIterator<Item = (u32, &'a [f32])>,
{
    let mut best: Vec<(f32, u32)> = Vec::with_capacity(k + 1);
    for (h, v) in items {
        let cand = (squared_l2(query, v), h);
        if best.len() == k {
            if k == 0 || by_distance(&cand, &best[k - 1]).is_ge() {
                continue;
            }
            best.pop();
        }
        let at = best.partition_point(|e| by_distance(e, &cand).is_lt());
        best.insert(at, cand);
    }
    best.into_iter().map(|(d, h)| (h, d)).collect()
}

/// Exact top-`k` for every query over the live `(id, vector)` set.
pub fn ground_truth<'a>(
    live: &[(u32, &'a [f32])],
    queries: &Dataset,
    k: usize,
) -> Vec<Vec<(u32, f32)>> {
    queries
        .iter()
        .map(|q| exact_top_k(q, live.iter().copied(), k))
        .collect()
}

/// Per-query buffers holding the exact nearest live vectors.
///
/// Each buffer is always the exact top-`len` of the live set. Inserts enter
/// a buffer only when they beat its current worst entry (or the buffer is
/// still at full depth), deletes drop out, and a buffer that shrinks below
/// `k` is refilled by a rescan on the next [`refresh`](Self::refresh).
#[derive(Debug, Clone)]
pub struct IncrementalGroundTruth {
    k: usize,
    depth: usize,
    queries: Dataset,
    buffers: Vec<Vec<(f32, u32)>>,
    /// Buffer may be missing entries beyond its length (after deletes).
    partial: Vec<bool>,
    rescans: usize,
}

impl IncrementalGroundTruth {
    pub fn new(queries: Dataset, k: usize) -> Self {
        let n = queries.len();
        Self {
            k,
            depth: (4 * k).max(k + 8),
            queries,
            buffers: vec![Vec::new(); n],
            partial: vec![false; n],
            rescans: 0,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn queries(&self) -> &Dataset {
        &self.queries
    }

    pub fn rescans(&self) -> usize {
        self.rescans
    }

    pub fn insert(&mut self, h: u32, v: &[f32]) {
        for (qi, q) in self.queries.iter().enumerate() {
            let cand = (squared_l2(q, v), h);
            let buf = &mut self.buffers[qi];
            let accept = match buf.last() {
                None => !self.partial[qi],
                Some(worst) if buf.len() >= self.depth || self.partial[qi] => {
                    by_distance(&cand, worst).is_lt()
                }
                Some(_) => true,
            };
            if accept {
                let at = buf.partition_point(|e| by_distance(e, &cand).is_lt());
                buf.insert(at, cand);
                if buf.len() > self.depth {
                    buf.pop();
                    self.partial[qi] = true;
                }
            } else if buf.len() >= self.depth {
                self.partial[qi] = true;
            }
        }
    }

    pub fn delete(&mut self, h: u32) {
        for (qi, buf) in self.buffers.iter_mut().enumerate() {
            if let Some(pos) = buf.iter().position(|e| e.1 == h) {
                buf.remove(pos);
                self.partial[qi] = true;
            }
        }
    }

    /// Rescans queries whose buffers fell below `k` entries.
    pub fn refresh<'a, F, I>(&mut self, mut live: F)
    where
        F: FnMut() -> I,
        I: IntoIterator<Item = (u32, &'a [f32])>,
    {
        for qi in 0..self.queries.len() {
            if self.buffers[qi].len() >= self.k || !self.partial[qi] {
                continue;
            }
            let top = exact_top_k(self.queries.row(qi), live(), self.depth);
            self.partial[qi] = top.len() == self.depth;
            self.buffers[qi] = top.into_iter().map(|(h, d)| (d, h)).collect();
            self.rescans += 1;
        }
    }

    /// Exact top-`k` ids for query `qi`. Call [`refresh`](Self::refresh)
    /// first after deletes.
    pub fn top_k(&self, qi: usize) -> Vec<u32> {
        self.buffers[qi].iter().take(self.k).map(|e| e.1).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn line(points: &[f32]) -> Dataset {
        Dataset::from_flat(1, points.to_vec()).unwrap()
    }

    #[test]
    fn one_dimensional_example() {
        let data = line(&[0.0, 1.0, 2.0, 3.0]);
        let items: Vec<(u32, &[f32])> = data
            .iter()
            .enumerate()
            .map(|(i, v)| (i as u32 + 1, v))
            .collect();
        let top = exact_top_k(&[2.2], items.iter().copied(), 2);
        // Points 2 and 3 are ids 3 and 4.
        assert_eq!(top.iter().map(|p| p.0).collect::<Vec<_>>(), vec![3, 4]);
        assert!((top[0].1 - 0.04).abs() < 1e-6);
        let exact = exact_top_k(&[1.0], items.iter().copied(), 1);
        assert_eq!(exact, vec![(2, 0.0)]);
        assert!(exact_top_k(&[1.0], std::iter::empty(), 3).is_empty());
    }

    #[test]
    fn ties_prefer_lower_id() {
        let data = line(&[1.0, 3.0]);
        let items: Vec<(u32, &[f32])> = data
            .iter()
            .enumerate()
            .map(|(i, v)| (i as u32 + 1, v))
            .collect();
        assert_eq!(exact_top_k(&[2.0], items.iter().copied(), 1)[0].0, 1);
    }

    #[test]
    fn incremental_matches_rescan_under_churn() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dim = 3;
        let n = 400;
        let data = Dataset::from_flat(dim, (0..n * dim).map(|_| rng.random()).collect()).unwrap();
        let queries =
            Dataset::from_flat(dim, (0..10 * dim).map(|_| rng.random()).collect()).unwrap();
        let k = 5;
        let mut gt = IncrementalGroundTruth::new(queries.clone(), k);
        let mut live: Vec<u32> = Vec::new();
        let mut next = 0usize;
        for round in 0..40 {
            for _ in 0..10 {
                if next < n {
                    let h = next as u32 + 1;
                    gt.insert(h, data.row(next));
                    live.push(h);
                    next += 1;
                }
            }
            for _ in 0..(if round > 5 { 8 } else { 0 }) {
                if live.len() > 1 {
                    let h = live.swap_remove(rng.random_range(0..live.len()));
                    gt.delete(h);
                }
            }
            let items: Vec<(u32, &[f32])> = live
                .iter()
                .map(|&h| (h, data.row(h as usize - 1)))
                .collect();
            gt.refresh(|| items.iter().copied());
            for qi in 0..queries.len() {
                let want: Vec<u32> = exact_top_k(queries.row(qi), items.iter().copied(), k)
                    .into_iter()
                    .map(|p| p.0)
                    .collect();
                assert_eq!(gt.top_k(qi), want, "round {round} query {qi}");
            }
        }
    }
}
