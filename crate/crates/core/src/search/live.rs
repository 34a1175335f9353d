//! The set of live (inserted, not deleted) host ids, supporting uniform
//! sampling for random entry points.

use parking_lot::RwLock;
use rand::seq::index::sample;
use rand::Rng;

#[derive(Debug, Default)]
struct Inner {
    ids: Vec<u32>,
    /// Position of each id in `ids`, or `u32::MAX`.
    pos: Vec<u32>,
}

#[derive(Debug, Default)]
pub struct LiveSet {
    inner: RwLock<Inner>,
}

const ABSENT: u32 = u32::MAX;

impl LiveSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.inner.read().ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, h_id: u32) -> bool {
        let g = self.inner.read();
        g.pos.get(h_id as usize).is_some_and(|&p| p != ABSENT)
    }

    /// Adds `h_id`; false if already present.
    pub fn insert(&self, h_id: u32) -> bool {
        let mut g = self.inner.write();
        let i = h_id as usize;
        if g.pos.len() <= i {
            g.pos.resize(i + 1, ABSENT);
        }
        if g.pos[i] != ABSENT {
            return false;
        }
        g.pos[i] = g.ids.len() as u32;
        g.ids.push(h_id);
        true
    }

    /// Removes `h_id` by swapping the last id into its place.
    pub fn remove(&self, h_id: u32) -> bool {
        let mut g = self.inner.write();
        let i = h_id as usize;
        let Some(&p) = g.pos.get(i) else { return false };
        if p == ABSENT {
            return false;
        }
        g.ids.swap_remove(p as usize);
        if let Some(&moved) = g.ids.get(p as usize) {
            g.pos[moved as usize] = p;
        }
        g.pos[i] = ABSENT;
        true
    }

    /// `min(n, len)` distinct ids chosen uniformly.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<u32> {
        let g = self.inner.read();
        let n = n.min(g.ids.len());
        sample(rng, g.ids.len(), n)
            .into_iter()
            .map(|i| g.ids[i])
            .collect()
    }

    /// Live ids in ascending order.
    pub fn sorted(&self) -> Vec<u32> {
        let mut ids = self.inner.read().ids.clone();
        ids.sort_unstable();
        ids
    }
}
