//! Acceptance criteria 1–11.
//!
//! Runs without the libtest harness so that every criterion prints exactly
//! one `PASS`/`FAIL` line regardless of output capture. Pass criterion
//! numbers as arguments to run a subset:
//! `cargo test --test acceptance -- 5 7`.

use std::io::Write;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::{ensure, Result};
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tierann::cache::{CostModel, Policy};
use tierann::search::mean_recall;
use tierann::store::Dataset;
use tierann::update::{ConsolidationStart, MergeReport};
use tierann::{IndexConfig, StreamingIndex};
use tierann_harness::bench::bench_cache;
use tierann_harness::dataset::{mixture_pair, Mixture, MixtureSpec};
use tierann_harness::invariants::{self, InvariantConfig};
use tierann_harness::runner::{run_trace, RunConfig};
use tierann_harness::spread::measure_deletion_spread;
use tierann_harness::stress::{consistency_stress, StressConfig};
use tierann_harness::truth::ground_truth;
use tierann_harness::workload::{sliding_window, SearchPlan};

/// Outcome of one criterion: whether it held, and the measured numbers.
type Verdict = Result<(bool, String)>;

struct Criterion {
    id: usize,
    name: &'static str,
    budget: Duration,
    run: fn() -> Verdict,
}

const fn mins(m: u64) -> Duration {
    Duration::from_secs(60 * m)
}

const CRITERIA: [Criterion; 11] = [
    Criterion {
        id: 1,
        name: "static recall band",
        budget: mins(10),
        run: c1_static_recall,
    },
    Criterion {
        id: 2,
        name: "oracle agreement at high beam",
        budget: mins(1),
        run: c2_oracle_agreement,
    },
    Criterion {
        id: 3,
        name: "cache transparency",
        budget: mins(1),
        run: c3_cache_transparency,
    },
    Criterion {
        id: 4,
        name: "threshold equivalence",
        budget: Duration::from_secs(1),
        run: c4_threshold,
    },
    Criterion {
        id: 5,
        name: "cache-policy ordering",
        budget: mins(10),
        run: c5_policy_ordering,
    },
    Criterion {
        id: 6,
        name: "consistency stress",
        budget: mins(5),
        run: c6_stress,
    },
    Criterion {
        id: 7,
        name: "deletion pipeline",
        budget: mins(15),
        run: c7_deletion_pipeline,
    },
    Criterion {
        id: 8,
        name: "repair bookkeeping",
        budget: mins(1),
        run: c8_repair_queue,
    },
    Criterion {
        id: 9,
        name: "deleted-neighbor spread",
        budget: mins(5),
        run: c9_spread,
    },
    Criterion {
        id: 10,
        name: "consolidation correctness",
        budget: mins(5),
        run: c10_consolidation,
    },
    Criterion {
        id: 11,
        name: "never-resurrect / read-after-write",
        budget: mins(10),
        run: c11_invariants,
    },
];

fn main() -> ExitCode {
    let selected: Vec<usize> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for c in CRITERIA
        .iter()
        .filter(|c| selected.is_empty() || selected.contains(&c.id))
    {
        let started = Instant::now();
        let outcome = (c.run)();
        let elapsed = started.elapsed();
        let (ok, detail) = match outcome {
            Ok((_, detail)) if elapsed > c.budget => (false, format!("{detail}; over budget")),
            Ok(v) => v,
            Err(e) => (false, format!("error: {e:#}")),
        };
        failed += usize::from(!ok);
        let line = format!(
            "C{:<2} {} {}: {} [{:.1}s / {}s]\n",
            c.id,
            if ok { "PASS" } else { "FAIL" },
            c.name,
            detail,
            elapsed.as_secs_f64(),
            c.budget.as_secs()
        );
        let mut out = std::io::stdout().lock();
        let _ = out.write_all(line.as_bytes());
        let _ = out.flush();
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}

fn rows(data: &Dataset) -> Vec<&[f32]> {
    data.iter().collect()
}

/// Recall@k of `index` against the exhaustive oracle over the live set.
fn oracle_recall(
    index: &StreamingIndex,
    queries: &Dataset,
    k: usize,
    l: usize,
    seed: u64,
) -> Result<f64> {
    let q = rows(queries);
    let got: Vec<Vec<u32>> = index
        .search_batch(&q, k, l, seed, 0)?
        .into_iter()
        .map(|o| o.ids)
        .collect();
    let truth: Vec<Vec<u32>> = q
        .iter()
        .map(|v| Ok(index.brute_force(v, k)?.into_iter().map(|e| e.0).collect()))
        .collect::<Result<_>>()?;
    Ok(mean_recall(&got, &truth, k))
}

/// 1. 100K × 100-D Gaussian mixture, R=32, L=128, k=10: recall ≥ 0.90.
fn c1_static_recall() -> Verdict {
    let (base, queries) = mixture_pair(MixtureSpec::new(100, 1), 100_000, 1000);
    let mut cfg = IndexConfig::new(100, base.len());
    cfg.degree = 32;
    let started = Instant::now();
    let index = StreamingIndex::build(cfg, &base)?;
    let build = started.elapsed().as_secs_f64();
    // The oracle here is the harness's own exhaustive scan over base rows,
    // independent of the index's brute_force helper.
    let q = rows(&queries);
    let live: Vec<(u32, &[f32])> = base
        .iter()
        .enumerate()
        .map(|(i, v)| (i as u32 + 1, v))
        .collect();
    let truth: Vec<Vec<u32>> = ground_truth(&live, &queries, 10)
        .into_iter()
        .map(|top| top.into_iter().map(|e| e.0).collect())
        .collect();
    let got: Vec<Vec<u32>> = index
        .search_batch(&q, 10, 128, 1, 0)?
        .into_iter()
        .map(|o| o.ids)
        .collect();
    let recall = mean_recall(&got, &truth, 10);
    Ok((
        recall >= 0.90,
        format!("recall@10 = {recall:.4} (≥ 0.90), build {build:.0}s"),
    ))
}

/// 2. N=2,000, D=16, L=512: recall@10 ≥ 0.99 over 100 queries.
fn c2_oracle_agreement() -> Verdict {
    let base = tierann_harness::dataset::uniform(2000, 16, 21);
    let queries = tierann_harness::dataset::uniform(100, 16, 22);
    let mut cfg = IndexConfig::new(16, 2000);
    cfg.degree = 32;
    let index = StreamingIndex::build(cfg, &base)?;
    let recall = oracle_recall(&index, &queries, 10, 512, 3)?;
    Ok((recall >= 0.99, format!("recall@10 = {recall:.4} (≥ 0.99)")))
}

/// 3. Byte-identical outputs across M ∈ {0, 0.2N, N} and all policies.
fn c3_cache_transparency() -> Verdict {
    let n = 10_000;
    let (base, queries) = mixture_pair(MixtureSpec::new(32, 3), n, 200);
    let mut cfg = IndexConfig::new(32, n);
    cfg.degree = 32;
    let lists = {
        let index = StreamingIndex::build(cfg.clone(), &base)?;
        (1..=n as u32)
            .map(|h| index.graph().compact_neighbors(h))
            .collect::<tierann::Result<Vec<_>>>()?
    };
    let q = rows(&queries);
    let mut reference: Option<Vec<(Vec<u32>, Vec<u32>)>> = None;
    let mut configs = 0;
    for hot in [0, n / 5, n] {
        for policy in [Policy::Wavp, Policy::Lru, Policy::Lfu, Policy::Lrfu] {
            let mut c = cfg.clone();
            c.hot_capacity = Some(hot);
            c.cache.policy = policy;
            let index = StreamingIndex::new(c)?;
            index.load_lists(&base, &lists)?;
            index.warm_up(None)?;
            // Two passes: the second runs against a tier the first populated.
            let mut out = Vec::new();
            for pass in 0..2u64 {
                for o in index.search_batch(&q, 10, 64, 17, pass * q.len() as u64)? {
                    out.push((o.ids, o.distances.iter().map(|d| d.to_bits()).collect()));
                }
            }
            match &reference {
                None => reference = Some(out),
                Some(r) => ensure!(*r == out, "outputs differ at M={hot}, policy {policy}"),
            }
            configs += 1;
        }
    }
    Ok((
        true,
        format!(
            "{configs} configurations × {} searches identical",
            2 * q.len()
        ),
    ))
}

/// 4. gain > 0 ⟺ λ > ρ over 10,000 random cost models and λ values.
fn c4_threshold() -> Verdict {
    let mut runner = TestRunner::new(Config {
        cases: 10_000,
        failure_persistence: None,
        ..Config::default()
    });
    let strategy = (
        1e-6f64..1e3,
        1e-6f64..1e3,
        1e-6f64..1e6,
        0.0f64..1e4,
        0u8..4,
    );
    let result = runner.run(&strategy, |(t_hot, spread, t_transfer, lambda, mode)| {
        let m = CostModel::new(t_hot, t_hot + spread, t_transfer).expect("valid model");
        let rho = m.rho();
        // A quarter of the cases sit exactly on, or one ulp beside, ρ.
        let lambda = match mode {
            0 => rho,
            1 => f64::from_bits(rho.to_bits() + 1),
            2 => f64::from_bits(rho.to_bits() - 1),
            _ => lambda,
        };
        proptest::prop_assert_eq!(m.gain(lambda) > 0.0, lambda > rho);
        Ok(())
    });
    match result {
        Ok(()) => Ok((true, "10000 cases, exact".into())),
        Err(e) => Ok((false, format!("{e}"))),
    }
}

/// Sliding-window trace over `n` vectors with T_max = 50.
fn sliding(
    n: usize,
    dim: usize,
    seed: u64,
) -> Result<(Dataset, Dataset, tierann_harness::workload::Trace)> {
    let (base, queries) = mixture_pair(MixtureSpec::new(dim, seed), n, 200);
    let mut plan = SearchPlan::new(200, 10);
    plan.per_step = 200;
    let trace = sliding_window(n, 50, plan, seed)?;
    Ok((base, queries, trace))
}

/// 5. SlidingWindow 50K, T_max=50, M=0.2N: WAVP cost ≤ every baseline and
/// WAVP promotions ≤ LRU's.
fn c5_policy_ordering() -> Verdict {
    let n = 50_000;
    let (base, queries, trace) = sliding(n, 32, 7)?;
    let mut index = IndexConfig::new(32, n);
    index.degree = 16;
    index.hot_capacity = Some(n / 5);
    let mut cfg = RunConfig::new(index);
    cfg.l = 64;
    let policies = [Policy::Wavp, Policy::Lru, Policy::Lfu, Policy::Lrfu];
    let results = bench_cache(&trace, &base, &queries, &cfg, &policies)?;
    let wavp = &results[0].summary;
    let mut ok = true;
    let mut detail = format!(
        "WAVP cost {:.3e} promotions {}",
        wavp.modeled_cost, wavp.promotions
    );
    for r in &results[1..] {
        let s = &r.summary;
        ok &= wavp.modeled_cost <= s.modeled_cost;
        ok &= s.overall_recall == wavp.overall_recall;
        detail += &format!("; {} {:.3e}/{}", r.policy, s.modeled_cost, s.promotions);
    }
    ok &= wavp.promotions <= results[1].summary.promotions;
    Ok((ok, detail))
}

/// 6. Interleaved insert/search batches of 10: recall@1 ≥ 0.95 with sync, strictly lower without.
fn c6_stress() -> Verdict {
    let mut cfg = StressConfig::new(10_000, 400);
    cfg.seed = 6;
    let data = Mixture::new(MixtureSpec::new(32, 6)).sample(cfg.rows_needed(), 1);
    let on = consistency_stress(&data, &cfg)?;
    cfg.sync = false;
    let off = consistency_stress(&data, &cfg)?;
    Ok((
        on.recall_at_1 >= 0.95 && off.recall_at_1 < on.recall_at_1,
        format!(
            "recall@1 with sync {:.4} (≥ 0.95), without {:.4}; {} searches",
            on.recall_at_1, off.recall_at_1, on.searches
        ),
    ))
}

/// 7. SlidingWindow to 50% churn on 50K: repair + consolidation beats
/// lazy-only by ≥ 0.02 recall@10.
fn c7_deletion_pipeline() -> Verdict {
    let n = 50_000;
    let (base, queries, trace) = sliding(n, 32, 7)?;
    let run = |maintained: bool| -> Result<tierann_harness::runner::RunSummary> {
        let mut index = IndexConfig::new(32, n);
        index.degree = 16;
        index.update.repair_enabled = maintained;
        index.update.consolidation_enabled = maintained;
        let mut cfg = RunConfig::new(index);
        cfg.l = 16;
        Ok(run_trace(&trace, &base, &queries, &cfg, |_| Ok(()))?.summary)
    };
    let full = run(true)?;
    let lazy = run(false)?;
    let churn = full.deletes as f64 / (full.inserts + trace_build_size(&trace)) as f64;
    Ok((
        full.mean_recall >= lazy.mean_recall + 0.02 && churn >= 0.5,
        format!(
            "recall@10 full {:.4} vs lazy-only {:.4} (gap {:+.4}); churn {:.0}%, {} consolidations, {} repaired",
            full.mean_recall,
            lazy.mean_recall,
            full.mean_recall - lazy.mean_recall,
            100.0 * churn,
            full.consolidations,
            full.repaired
        ),
    ))
}

fn trace_build_size(trace: &tierann_harness::workload::Trace) -> usize {
    trace
        .ops()
        .filter_map(|op| match op {
            tierann_harness::workload::Op::Build(n) => Some(*n),
            _ => None,
        })
        .sum()
}

/// 8. After randomized delete batches on N=10K, the repair queue equals the
/// full-scan set exactly.
fn c8_repair_queue() -> Verdict {
    let n = 10_000;
    let base = tierann_harness::dataset::uniform(n + 1000, 16, 8);
    let mut cfg = IndexConfig::new(16, n + 1000);
    cfg.degree = 16;
    let index = StreamingIndex::build(cfg, &base.slice(0, n))?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut next_row = n;
    let mut batches = 0;
    let mut max_queue = 0;
    while index.deleted_count() < n / 2 {
        for _ in 0..rng.random_range(1..200) {
            let h = rng.random_range(1..=index.store().max_id());
            if index.is_live(h) {
                index.delete(h)?;
            }
        }
        if batches % 5 == 0 && next_row < base.len() {
            for _ in 0..20 {
                index.insert(base.row(next_row))?;
                next_row += 1;
            }
        }
        if batches % 7 == 3 {
            index.repair_affected(100)?;
        }
        let queue = index.repair_queue();
        ensure!(
            queue == index.repair_candidates_full_scan(),
            "mismatch after batch {batches}"
        );
        max_queue = max_queue.max(queue.len());
        batches += 1;
    }
    Ok((
        true,
        format!("{batches} batches, queue up to {max_queue}, exact match"),
    ))
}

/// 9. 10% deletions on a 100K KNNG populate both the 10–40% and >40%
/// deleted-neighbor buckets.
fn c9_spread() -> Verdict {
    let n = 100_000;
    let base = Mixture::new(MixtureSpec::new(16, 9)).sample(n, 1);
    let mut cfg = IndexConfig::new(16, n);
    cfg.degree = 16;
    let index = StreamingIndex::build(cfg, &base)?;
    let h = measure_deletion_spread(index.graph(), 0.10, 9);
    Ok((
        h.counts[1] > 0 && h.counts[2] > 0,
        format!(
            "{} deleted; live vertices by deleted-neighbor fraction <10%: {}, 10–40%: {}, >40%: {}",
            h.deleted, h.counts[0], h.counts[1], h.counts[2]
        ),
    ))
}

/// 10. After a >20% trigger with inserts during the window: no live vertex
/// lists a deleted id, and every logged triplet is applied or dominated.
fn c10_consolidation() -> Verdict {
    let n = 20_000;
    let extra = 2_000;
    let base = Mixture::new(MixtureSpec::new(16, 10)).sample(n + extra, 1);
    let mut cfg = IndexConfig::new(16, n + extra);
    cfg.degree = 16;
    let index = StreamingIndex::build(cfg, &base.slice(0, n))?;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    while !index.consolidation_due() {
        let h = rng.random_range(1..=n as u32);
        if index.is_live(h) {
            index.delete(h)?;
        }
    }
    let deleted_before = index.deleted_count();
    let job = match index.begin_consolidation(false)? {
        ConsolidationStart::Started(job) => job,
        _ => anyhow::bail!("consolidation did not start"),
    };
    // Inserts during the window produce reverse-edge triplets.
    for row in n..n + extra {
        index.insert(base.row(row))?;
    }
    let merged = index.run_consolidation(&job);
    let report = index.merge_versions(merged)?;
    check_merge(&index, &report)?;
    ensure!(
        report.reclaimed == deleted_before,
        "reclaimed {} of {deleted_before}",
        report.reclaimed
    );
    ensure!(
        report.appended == extra,
        "appended {} of {extra}",
        report.appended
    );
    Ok((
        true,
        format!(
            "{} reclaimed, {} appended, log {} = {} applied + {} dominated + {} dropped",
            report.reclaimed,
            report.appended,
            report.log.len(),
            report.triplets_applied,
            report.triplets_dominated,
            report.triplets_dropped
        ),
    ))
}

/// At-rest checks on a merged graph, including a replay of the reverse log.
fn check_merge(index: &StreamingIndex, report: &MergeReport) -> Result<()> {
    let graph = index.graph();
    for v in index.live().sorted() {
        for u in graph.compact_neighbors(v)? {
            ensure!(index.is_live(u), "live {v} lists deleted {u}");
        }
    }
    for t in &report.log {
        if !index.is_live(t.v) || !index.is_live(t.v_new) {
            continue;
        }
        let list = graph.compact_neighbors(t.v)?;
        if list.contains(&t.v_new) {
            continue;
        }
        // Not applied: it must be no closer than every retained neighbor.
        for u in list {
            let du = index.store().distance_between(t.v, u)?;
            ensure!(
                (du, u) <= (t.d, t.v_new),
                "triplet ({}, {}, {}) neither applied nor dominated",
                t.v,
                t.v_new,
                t.d
            );
        }
    }
    ensure!(
        report.triplets_applied + report.triplets_dominated + report.triplets_dropped
            == report.log.len(),
        "triplet accounting"
    );
    graph.check_invariants()?;
    index.store().check_mapping_invariants()?;
    Ok(())
}

/// 11. Never-resurrect and read-after-write under 10⁵-op interleavings, both
/// single-driver and with concurrent reader and writer threads.
fn c11_invariants() -> Verdict {
    let mut cfg = InvariantConfig::new(5_000, 100_000);
    cfg.seed = 11;
    let data = Mixture::new(MixtureSpec::new(16, 11)).sample(cfg.rows_needed() + 1000, 1);
    let single = invariants::interleaved(&data, &cfg)?;
    let concurrent = invariants::concurrent(&data, &cfg)?;
    Ok((
        single.passed()
            && concurrent.passed()
            && single.ops == 100_000
            && concurrent.ops == 100_000,
        format!(
            "single-driver: {} ops, {}/{} read-after-write at L=64, {}/{} at random L in 1..=64, \
             {} resurrections, {} consolidations; \
             concurrent: {} ops, {}/{} read-after-write, {} resurrections",
            single.ops,
            single.raw_found,
            single.raw_checks,
            single.raw_any_found,
            single.raw_any_checks,
            single.resurrections,
            single.consolidations,
            concurrent.ops,
            concurrent.raw_found,
            concurrent.raw_checks,
            concurrent.resurrections
        ),
    ))
}
