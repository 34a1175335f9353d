//! Per-checkpoint metrics records and latency percentiles.

use serde::{Deserialize, Serialize};

/// One checkpoint's measurements. Interval fields cover the operations since
/// the previous checkpoint; `cumulative_*` fields cover the whole run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub step: usize,
    pub k: usize,
    /// Mean recall@k over the searches issued in this checkpoint's step.
    pub recall_at_k: f64,
    pub searches: usize,
    pub search_throughput: f64,
    pub insert_throughput: f64,
    pub miss_rate: f64,
    pub p50_latency_ms: f64,
    pub p95_latency_ms: f64,
    pub p99_latency_ms: f64,
    pub modeled_cost: f64,
    pub cumulative_modeled_cost: f64,
    pub promotions: u64,
    pub live: usize,
    pub deleted: usize,
}

/// Nearest-rank percentile (`p` in `[0, 100]`) of unsorted samples; 0 for
/// an empty sample.
pub fn percentile(samples: &[f64], p: f64) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    percentile_sorted(&sorted, p)
}

fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// p50, p95 and p99 of the samples.
pub fn latency_percentiles(samples: &[f64]) -> (f64, f64, f64) {
    if samples.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    (
        percentile_sorted(&sorted, 50.0),
        percentile_sorted(&sorted, 95.0),
        percentile_sorted(&sorted, 99.0),
    )
}

impl MetricsRecord {
    /// Checks the record's sanity invariants.
    pub fn check(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.miss_rate) {
            return Err(format!("miss rate {} outside [0, 1]", self.miss_rate));
        }
        if !(0.0..=1.0).contains(&self.recall_at_k) {
            return Err(format!("recall {} outside [0, 1]", self.recall_at_k));
        }
        if !(self.p50_latency_ms <= self.p95_latency_ms
            && self.p95_latency_ms <= self.p99_latency_ms)
        {
            return Err("latency percentiles are not monotone".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn nearest_rank() {
        let s: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(latency_percentiles(&s), (50.0, 95.0, 99.0));
        assert_eq!(percentile(&[3.0, 1.0, 2.0], 50.0), 2.0);
        assert_eq!(percentile(&[7.0], 99.0), 7.0);
        assert_eq!(percentile(&[], 50.0), 0.0);
        assert_eq!(percentile(&[1.0, 2.0], 0.0), 1.0);
    }

    #[test]
    fn json_round_trip() {
        let r = MetricsRecord {
            step: 3,
            k: 10,
            recall_at_k: 0.5,
            miss_rate: 0.25,
            ..Default::default()
        };
        let line = serde_json::to_string(&r).unwrap();
        assert!(line.contains("\"recall_at_k\":0.5"));
        assert_eq!(serde_json::from_str::<MetricsRecord>(&line).unwrap(), r);
        r.check().unwrap();
    }

    proptest! {
        #[test]
        fn percentiles_monotone(samples in proptest::collection::vec(0.0f64..1e3, 0..200)) {
            let (a, b, c) = latency_percentiles(&samples);
            prop_assert!(a <= b && b <= c);
        }
    }
}
