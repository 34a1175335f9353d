//! Clock sweep that picks the eviction victim within one hot-tier segment.

use std::sync::atomic::{AtomicBool, Ordering};

fn min_unreferenced(predicts: &[f64], refs: &[&AtomicBool]) -> Option<f64> {
    predicts
        .iter()
        .zip(refs)
        .filter(|(_, r)| !r.load(Ordering::Acquire))
        .map(|(&p, _)| p)
        .min_by(f64::total_cmp)
}

/// Picks the victim position starting from `clock`.
///
/// `predicts` is a snapshot of `F_lambda` for the occupants, aligned with
/// their reference bits. `F_min` is taken over unreferenced slots before the
/// sweep; the sweep clears set bits until it reaches an unreferenced slot
/// whose snapshot value equals `F_min`. After every full pass without a match
/// `F_min` is recomputed over the (now cleared) bits, so the sweep ends within
/// two passes unless bits are set concurrently; after four passes the slot
/// under the hand is taken unconditionally.
///
/// Returns `(victim, positions_examined)`.
pub fn sweep(predicts: &[f64], refs: &[&AtomicBool], clock: usize) -> (usize, usize) {
    let m = predicts.len();
    assert!(m > 0 && refs.len() == m, "sweep needs aligned, nonempty slots");
    let mut f_min = min_unreferenced(predicts, refs);
    let mut pos = clock % m;
    let mut examined = 0;
    loop {
        examined += 1;
        if refs[pos].swap(false, Ordering::AcqRel) {
            // Second chance: bit cleared, move on.
        } else if f_min.is_some_and(|f| predicts[pos] == f) {
            return (pos, examined);
        }
        if examined >= 4 * m {
            return (pos, examined);
        }
        pos = (pos + 1) % m;
        if examined % m == 0 {
            f_min = min_unreferenced(predicts, refs);
        }
    }
}
