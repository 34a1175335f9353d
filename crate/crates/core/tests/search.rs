//! Search-module examples and properties against a brute-force oracle.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tierann::cache::Policy;
use tierann::search::{mean_recall, mix_seed};
use tierann::store::Dataset;
use tierann::{Error, IndexConfig, StreamingIndex};

fn line(points: &[f32], degree: usize) -> StreamingIndex {
    let data = Dataset::from_flat(1, points.to_vec()).unwrap();
    let mut cfg = IndexConfig::new(1, points.len() + 8);
    cfg.degree = degree;
    cfg.partition_size = 1024;
    StreamingIndex::build(cfg, &data).unwrap()
}

fn random(n: usize, dim: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Dataset::from_flat(dim, (0..n * dim).map(|_| rng.random::<f32>()).collect()).unwrap()
}

fn index_over(data: &Dataset, degree: usize, configure: impl FnOnce(&mut IndexConfig)) -> StreamingIndex {
    let mut cfg = IndexConfig::new(data.dim(), data.len() + 64);
    cfg.degree = degree;
    cfg.partition_size = 4096;
    configure(&mut cfg);
    StreamingIndex::build(cfg, data).unwrap()
}

#[test]
fn one_dimensional_example_and_deletion() {
    let index = line(&[0.0, 1.0, 2.0, 3.0], 2);
    let out = index.search(&[2.2], 1, 4, 7).unwrap();
    // Point 2 is host id 3.
    assert_eq!(out.ids, vec![3]);
    assert!((out.distances[0] - 0.04).abs() < 1e-6);
    index.delete(3).unwrap();
    let out = index.search(&[2.2], 1, 4, 7).unwrap();
    assert_eq!(out.ids, vec![4]);
    assert!((out.distances[0] - 0.64).abs() < 1e-6);
}

#[test]
fn exact_match_has_zero_distance() {
    let data = random(500, 8, 1);
    let index = index_over(&data, 16, |_| {});
    for i in [0usize, 17, 499] {
        let out = index.search(data.row(i), 1, 32, 3).unwrap();
        assert_eq!(out.ids, vec![i as u32 + 1]);
        assert_eq!(out.distances, vec![0.0]);
    }
}

#[test]
fn k_above_l_is_rejected_and_empty_index_is_empty() {
    let index = line(&[0.0, 1.0, 2.0], 2);
    assert!(matches!(index.search(&[0.0], 5, 4, 0), Err(Error::InvalidArgument(_))));
    let empty = StreamingIndex::new(IndexConfig::new(1, 4)).unwrap();
    let out = empty.search(&[0.0], 1, 4, 0).unwrap();
    assert!(out.ids.is_empty());
    for h in 1..=3 {
        index.delete(h).unwrap();
    }
    assert!(index.search(&[0.0], 1, 4, 0).unwrap().ids.is_empty());
}

#[test]
fn oracle_agreement_at_high_beam() {
    let data = random(2000, 16, 11);
    let queries = random(100, 16, 12);
    let index = index_over(&data, 16, |_| {});
    let rows: Vec<&[f32]> = queries.iter().collect();
    let outs = index.search_batch(&rows, 10, 512, 5, 0).unwrap();
    let got: Vec<Vec<u32>> = outs.into_iter().map(|o| o.ids).collect();
    let truth: Vec<Vec<u32>> = rows
        .iter()
        .map(|q| index.brute_force(q, 10).unwrap().into_iter().map(|e| e.0).collect())
        .collect();
    let recall = mean_recall(&got, &truth, 10);
    assert!(recall >= 0.99, "recall {recall}");
}

#[test]
fn batch_matches_individual_searches() {
    let data = random(800, 8, 2);
    let queries = random(20, 8, 3);
    let index = index_over(&data, 16, |_| {});
    let rows: Vec<&[f32]> = queries.iter().collect();
    let batch = index.search_batch(&rows, 10, 40, 99, 5).unwrap();
    for (i, q) in rows.iter().enumerate() {
        let single = index.search(q, 10, 40, mix_seed(99, 5 + i as u64)).unwrap();
        assert_eq!(single.ids, batch[i].ids);
        assert_eq!(single.distances, batch[i].distances);
    }
}

/// Search outputs for every query under one cache configuration.
fn outputs(data: &Dataset, queries: &Dataset, hot: usize, policy: Policy) -> Vec<(Vec<u32>, Vec<u32>)> {
    let index = index_over(data, 16, |c| {
        c.hot_capacity = Some(hot);
        c.cache.policy = policy;
        c.cache.theta_adaptive = true;
        c.cache.adapt_window = 500;
    });
    let rows: Vec<&[f32]> = queries.iter().collect();
    // Two passes so the second runs against a populated hot tier.
    let mut all = Vec::new();
    for pass in 0..2u64 {
        for o in index.search_batch(&rows, 10, 48, 1234, pass * 1000).unwrap() {
            all.push((o.ids, o.distances.iter().map(|d| d.to_bits()).collect()));
        }
    }
    all
}

#[test]
fn cache_state_never_changes_results() {
    let data = random(3000, 12, 21);
    let queries = random(60, 12, 22);
    let reference = outputs(&data, &queries, 0, Policy::Wavp);
    for hot in [0, 600, 3000] {
        for policy in [Policy::Wavp, Policy::Lru, Policy::Lfu, Policy::Lrfu, Policy::ColdOnly] {
            assert!(outputs(&data, &queries, hot, policy) == reference, "M={hot} {policy}");
        }
    }
}

#[test]
fn stats_reconcile_with_evaluations() {
    let data = random(1000, 8, 4);
    let index = index_over(&data, 16, |c| c.hot_capacity = Some(200));
    index.warm_up(None).unwrap();
    let cost = *index.cache().cost();
    for s in 0..20 {
        let out = index.search(data.row(s), 5, 32, s as u64).unwrap();
        let st = out.stats;
        let modeled = st.hot_hits as f64 * cost.t_hot
            + st.cold_computes as f64 * cost.t_cold
            + st.promotions as f64 * (cost.t_transfer + cost.t_hot);
        assert!((modeled - st.modeled_cost).abs() < 1e-6);
        assert!((0.0..=1.0).contains(&st.miss_rate()));
        assert!(st.iterations as usize <= index.live_count());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Top-k is a prefix of top-(k+1) for the same query and seed.
    #[test]
    fn monotone_k(seed in any::<u64>(), k in 1usize..20) {
        let data = random(400, 6, seed % 7);
        let index = index_over(&data, 12, |_| {});
        let q = random(1, 6, seed).row(0).to_vec();
        let a = index.search(&q, k, 32, seed).unwrap();
        let b = index.search(&q, k + 1, 32, seed).unwrap();
        prop_assert_eq!(&a.ids[..], &b.ids[..k]);
    }

    /// No returned id is ever deleted, under random delete/search
    /// interleavings.
    #[test]
    fn deleted_ids_are_never_returned(seed in any::<u64>()) {
        let data = random(300, 4, seed % 5);
        let index = index_over(&data, 8, |c| c.hot_capacity = Some(60));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..120 {
            if rng.random_bool(0.4) && index.live_count() > 1 {
                let h = rng.random_range(1..=300u32);
                if index.is_live(h) {
                    index.delete(h).unwrap();
                }
            } else {
                let q = data.row(rng.random_range(0..300));
                let out = index.search(q, 5, 16, rng.random()).unwrap();
                for h in out.ids {
                    prop_assert!(index.is_live(h), "returned deleted id {}", h);
                }
            }
        }
    }
}
