use std::sync::atomic::{AtomicU64, Ordering};

/// Fixed-capacity bitset with atomic set and test.
#[derive(Debug)]
pub struct AtomicBitset {
    words: Box<[AtomicU64]>,
    bits: usize,
}

impl AtomicBitset {
    pub fn new(bits: usize) -> Self {
        let words = bits.div_ceil(64);
        Self {
            words: (0..words).map(|_| AtomicU64::new(0)).collect(),
            bits,
        }
    }

    pub fn len(&self) -> usize {
        self.bits
    }

    pub fn is_empty(&self) -> bool {
        self.bits == 0
    }

    /// Sets bit `i`, returning whether it was already set.
    pub fn set(&self, i: usize) -> bool {
        let mask = 1u64 << (i % 64);
        self.words[i / 64].fetch_or(mask, Ordering::AcqRel) & mask != 0
    }

    pub fn get(&self, i: usize) -> bool {
        if i >= self.bits {
            return false;
        }
        self.words[i / 64].load(Ordering::Acquire) & (1u64 << (i % 64)) != 0
    }

    pub fn count_ones(&self) -> usize {
        self.words
            .iter()
            .map(|w| w.load(Ordering::Relaxed).count_ones() as usize)
            .sum()
    }
}
