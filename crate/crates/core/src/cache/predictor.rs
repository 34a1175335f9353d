//! Access predictor: decayed recent-access counters plus in-degree.
//!
//! Counters decay lazily. Each counter packs an f32 count with the decay
//! epoch it was last brought up to date in; readers apply the missing decay
//! steps on the fly, so no global pass is needed when an epoch closes.

use std::sync::atomic::{AtomicU64, Ordering};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictorParams {
    pub alpha: f64,
    pub beta: f64,
    /// Global accesses per decay epoch.
    pub window_len: u64,
    pub decay: f64,
}

impl Default for PredictorParams {
    fn default() -> Self {
        Self {
            alpha: 0.6,
            beta: 0.4,
            window_len: 4096,
            decay: 0.5,
        }
    }
}

#[derive(Debug)]
pub struct Predictor {
    params: PredictorParams,
    counters: Box<[AtomicU64]>,
    total: AtomicU64,
}

fn pack(count: f32, epoch: u64) -> u64 {
    (count.to_bits() as u64) << 32 | (epoch & 0xFFFF_FFFF)
}

fn unpack(v: u64) -> (f32, u64) {
    (f32::from_bits((v >> 32) as u32), v & 0xFFFF_FFFF)
}

impl Predictor {
    pub fn new(capacity: usize, params: PredictorParams) -> Self {
        Self {
            params,
            counters: (0..=capacity).map(|_| AtomicU64::new(0)).collect(),
            total: AtomicU64::new(0),
        }
    }

    pub fn params(&self) -> &PredictorParams {
        &self.params
    }

    pub fn total_accesses(&self) -> u64 {
        self.total.load(Ordering::Relaxed)
    }

    fn epoch_now(&self) -> u64 {
        self.total.load(Ordering::Relaxed) / self.params.window_len.max(1)
    }

    fn decayed(&self, count: f32, from: u64, to: u64) -> f32 {
        let steps = to.saturating_sub(from).min(i32::MAX as u64) as i32;
        if steps == 0 {
            count
        } else {
            (count as f64 * self.params.decay.powi(steps)) as f32
        }
    }

    /// Counts one access to `h_id`. Concurrent updates to one counter may
    /// drop an increment (load then store, no CAS).
    #[inline]
    pub fn record(&self, h_id: u32) {
        let Some(slot) = self.counters.get(h_id as usize) else {
            return;
        };
        let k = self.total.fetch_add(1, Ordering::Relaxed);
        let epoch = k / self.params.window_len.max(1);
        let (count, at) = unpack(slot.load(Ordering::Relaxed));
        let at = at.min(epoch);
        slot.store(pack(self.decayed(count, at, epoch) + 1.0, epoch), Ordering::Relaxed);
    }

    /// Decayed access count `F_recent`.
    #[inline]
    pub fn recent(&self, h_id: u32) -> f64 {
        let Some(slot) = self.counters.get(h_id as usize) else {
            return 0.0;
        };
        let (count, at) = unpack(slot.load(Ordering::Relaxed));
        self.decayed(count, at, self.epoch_now()) as f64
    }

    /// `alpha * F_recent + beta * ln(1 + in_degree)`.
    #[inline]
    pub fn predict(&self, h_id: u32, in_degree: u32) -> f64 {
        predict_value(&self.params, self.recent(h_id), in_degree as f64)
    }

    /// Forgets the history of `h_id`.
    pub fn reset(&self, h_id: u32) {
        if let Some(slot) = self.counters.get(h_id as usize) {
            slot.store(0, Ordering::Relaxed);
        }
    }
}

pub fn predict_value(params: &PredictorParams, recent: f64, in_degree: f64) -> f64 {
    params.alpha * recent + params.beta * in_degree.ln_1p()
}
