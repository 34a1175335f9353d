//! Traditional replacement policies used for the ablation: LRU, LFU and
//! LRFU. Each keeps one ordered key per occupied slot of a segment; the
//! victim is the smallest key.

use std::collections::BTreeSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BaselineKind {
    Lru,
    Lfu,
    /// Combined recency-frequency with decay `lambda` per tick.
    Lrfu,
}

/// Order-preserving map from f64 to u64.
fn ordered_bits(v: f64) -> u64 {
    let b = v.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | 1 << 63
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Entry {
    occupied: bool,
    last: u64,
    count: u64,
    /// log2 of the combined recency-frequency value at time `last`.
    log_crf: f64,
}

#[derive(Debug)]
pub struct BaselineState {
    kind: BaselineKind,
    lrfu_lambda: f64,
    tick: u64,
    entries: Vec<Entry>,
    /// (primary key, secondary key, position)
    order: BTreeSet<(u64, u64, usize)>,
}

impl BaselineState {
    pub fn new(kind: BaselineKind, slots: usize, lrfu_lambda: f64) -> Self {
        Self {
            kind,
            lrfu_lambda,
            tick: 0,
            entries: vec![Entry::default(); slots],
            order: BTreeSet::new(),
        }
    }

    fn key(&self, pos: usize) -> (u64, u64, usize) {
        let e = &self.entries[pos];
        match self.kind {
            BaselineKind::Lru => (e.last, 0, pos),
            BaselineKind::Lfu => (e.count, e.last, pos),
            BaselineKind::Lrfu => (
                ordered_bits(e.log_crf + self.lrfu_lambda * e.last as f64),
                e.last,
                pos,
            ),
        }
    }

    fn touch(&mut self, pos: usize, fresh: bool) {
        if self.entries[pos].occupied {
            let k = self.key(pos);
            self.order.remove(&k);
        }
        self.tick += 1;
        let now = self.tick;
        let lambda = self.lrfu_lambda;
        let e = &mut self.entries[pos];
        if fresh {
            *e = Entry {
                occupied: true,
                last: now,
                count: 1,
                log_crf: 0.0,
            };
        } else {
            // CRF_new = 1 + 2^(-lambda * dt) * CRF_old, in log2 form.
            let decayed = e.log_crf - lambda * (now - e.last) as f64;
            e.log_crf = (1.0 + decayed.exp2()).log2();
            e.last = now;
            e.count += 1;
        }
        let k = self.key(pos);
        self.order.insert(k);
    }

    /// Records a hit on the occupant at `pos`.
    pub fn on_hit(&mut self, pos: usize) {
        if self.entries[pos].occupied {
            self.touch(pos, false);
        }
    }

    /// Records a new occupant at `pos`.
    pub fn on_insert(&mut self, pos: usize) {
        self.touch(pos, true);
    }

    pub fn on_remove(&mut self, pos: usize) {
        if self.entries[pos].occupied {
            let k = self.key(pos);
            self.order.remove(&k);
            self.entries[pos] = Entry::default();
        }
    }

    /// Position the policy would evict next.
    pub fn victim(&self) -> Option<usize> {
        self.order.first().map(|k| k.2)
    }
}
