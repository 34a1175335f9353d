//! Squared Euclidean distance.
//!
//! All comparisons in the index use squared L2; it is order-equivalent to L2
//! and every reported distance is squared. The accumulation order is fixed so
//! the same pair of vectors always produces the same bits regardless of which
//! tier served the bytes.

const LANES: usize = 8;

#[inline]
pub fn squared_l2(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f32; LANES];
    let chunks_a = a.chunks_exact(LANES);
    let chunks_b = b.chunks_exact(LANES);
    let tail_a = chunks_a.remainder();
    let tail_b = chunks_b.remainder();
    for (ca, cb) in chunks_a.zip(chunks_b) {
        for i in 0..LANES {
            let d = ca[i] - cb[i];
            acc[i] += d * d;
        }
    }
    let mut tail = 0.0f32;
    for (x, y) in tail_a.iter().zip(tail_b) {
        let d = x - y;
        tail += d * d;
    }
    let lo = (acc[0] + acc[4]) + (acc[1] + acc[5]);
    let hi = (acc[2] + acc[6]) + (acc[3] + acc[7]);
    lo + hi + tail
}

/// Total order on `(distance, id)` pairs: nearer first, lower id on ties.
#[inline]
pub fn cmp_candidates(a: (f32, u32), b: (f32, u32)) -> std::cmp::Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_naive_sum() {
        let a: Vec<f32> = (0..19).map(|i| i as f32 * 0.5).collect();
        let b: Vec<f32> = (0..19).map(|i| (i as f32).sin()).collect();
        let naive: f64 = a
            .iter()
            .zip(&b)
            .map(|(x, y)| ((x - y) as f64).powi(2))
            .sum();
        assert!((squared_l2(&a, &b) as f64 - naive).abs() < 1e-3);
    }

    #[test]
    fn one_dimensional() {
        assert_eq!(squared_l2(&[2.2], &[2.0]), (2.2f32 - 2.0) * (2.2f32 - 2.0));
        assert_eq!(squared_l2(&[3.0], &[3.0]), 0.0);
    }

    #[test]
    fn tie_break_prefers_lower_id() {
        use std::cmp::Ordering;
        assert_eq!(cmp_candidates((1.0, 3), (1.0, 5)), Ordering::Less);
        assert_eq!(cmp_candidates((0.5, 9), (1.0, 1)), Ordering::Less);
    }
}
