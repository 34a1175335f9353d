use std::sync::atomic::Ordering;

use crate::error::{Error, Result};
use crate::graph::detour_reorder;
use crate::index::StreamingIndex;
use crate::search::{mix_seed, SearchStats};

use super::{drop_farthest, Triplet};

impl StreamingIndex {
    /// Inserts a vector and links it into the graph. Returns its id.
    pub fn insert(&self, components: &[f32]) -> Result<u32> {
        if components.len() != self.config.dim {
            return Err(Error::DimensionMismatch {
                expected: self.config.dim,
                actual: components.len(),
            });
        }
        let _phase = self.phase.read();
        let r = self.config.degree;
        let h = self.store.alloc_vector(components)?;

        let chosen: Vec<u32> = if self.live.len() <= r {
            // Bootstrap: the first R + 1 vectors are fully interconnected.
            let mut all = Vec::new();
            for u in self.live.sorted() {
                if let Ok(d) = self.store.distance_between(h, u) {
                    all.push((d, u));
                }
            }
            all.sort_by(|a, b| crate::distance::cmp_candidates(*a, *b));
            all.into_iter().map(|(_, u)| u).collect()
        } else {
            let mut stats = SearchStats::default();
            let seed = mix_seed(self.config.update.insert_seed, h as u64);
            let pool = self.context().search_pool(
                components,
                self.config.update.l_insert,
                seed,
                &mut stats,
            )?;
            let candidates: Vec<u32> = pool
                .entries()
                .iter()
                .map(|e| e.id)
                .filter(|&u| !self.store.is_deleted(u))
                .collect();
            let mut reordered = detour_reorder(&candidates, |c| {
                self.graph.compact_neighbors(c).unwrap_or_default()
            });
            reordered.truncate(r);
            reordered
        };

        self.graph.add_vertex(h)?;
        self.graph.set_neighbors(h, &chosen)?;

        let window = self.window_max_id.load(Ordering::Acquire);
        let mut changed = Vec::new();
        for &u in &chosen {
            let Ok(d) = self.store.distance_between(u, h) else { continue };
            if window != 0 && u <= window && h > window {
                self.window.lock().log.push(Triplet { v: u, v_new: h, d });
            }
            let updated = self.graph.update_with(u, |cur| {
                // Drop-farthest by exact distance; deleted entries get no
                // preference, so lazy deletion leaves lists untouched.
                drop_farthest(cur, h, d, r, |x| self.store.distance_between(u, x).ok())
            });
            if let Ok(Some(_)) = updated {
                changed.push(u);
            }
        }
        if changed.is_empty() {
            // Every neighbor rejected the reverse edge, which would leave `h`
            // unreachable. Its nearest neighbor takes it in place of its own
            // farthest entry.
            if let Some(u) = self.nearest(h, &chosen).first().copied() {
                let forced = self.graph.update_with(u, |cur| {
                    if cur.contains(&h) {
                        return None;
                    }
                    let mut out = cur.to_vec();
                    let far = out
                        .iter()
                        .enumerate()
                        .map(|(i, &x)| {
                            let d = self.store.distance_between(u, x).unwrap_or(f32::INFINITY);
                            (i, (d, x))
                        })
                        .max_by(|a, b| crate::distance::cmp_candidates(a.1, b.1))
                        .map(|(i, _)| i);
                    match far {
                        Some(i) if out.len() >= r => out[i] = h,
                        _ => out.push(h),
                    }
                    Some(out)
                });
                if let Ok(Some(_)) = forced {
                    changed.push(u);
                }
            }
        }
        for &u in &changed {
            self.refresh_repair_membership(u);
        }
        self.mark_dirty(&changed);
        self.live.insert(h);
        Ok(h)
    }
}
