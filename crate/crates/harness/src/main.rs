//! `tierann` command-line entry point.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use tierann::cache::Policy;
use tierann::graph::persist::GraphFile;
use tierann::search::mean_recall;
use tierann::store::{read_ivecs, read_vectors, write_fvecs, write_ivecs, Dataset};
use tierann::StreamingIndex;
use tierann_harness::bench::bench_cache;
use tierann_harness::dataset::{mixture_pair, MixtureSpec};
use tierann_harness::runner::{allocations, run_trace, RunConfig};
use tierann_harness::spread::measure_deletion_spread;
use tierann_harness::truth::exact_top_k;
use tierann_harness::workload::{
    clustered, expiration, growth, sliding_window, ClusteredParams, SearchPlan, Trace,
};

#[derive(Parser)]
#[command(
    name = "tierann",
    version,
    about = "Streaming ANN engine and benchmark harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Writes a synthetic Gaussian-mixture base set and query set.
    GenData(GenData),
    /// Builds a graph over a base set and writes it.
    Build(Build),
    /// Searches a base set (building or loading its graph), reports recall and
    /// optionally writes per-query results.
    Search(Search),
    /// Writes exact ground truth (0-based base rows) as ivecs.
    Gt(Gt),
    /// Generates a workload trace.
    GenTrace(GenTrace),
    /// Replays a trace, writing one JSON metrics line per checkpoint.
    Run(Run),
    /// Replays a trace under several cache policies.
    BenchCache(BenchCache),
    /// Buckets vertices by deleted-neighbor fraction after random deletes.
    MeasureDeletionSpread(Spread),
}

#[derive(Args)]
struct GenData {
    #[arg(long, default_value_t = 100_000)]
    n: usize,
    #[arg(long, default_value_t = 1_000)]
    queries: usize,
    #[arg(long, default_value_t = 100)]
    dim: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    base_out: PathBuf,
    #[arg(long)]
    queries_out: PathBuf,
}

#[derive(Args)]
struct Common {
    /// Base vectors (.fvecs or .bvecs).
    #[arg(long)]
    base: PathBuf,
    /// Flat key=value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct Build {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Search {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    queries: PathBuf,
    /// Prebuilt graph written by `build`; built from the base set when absent.
    #[arg(long, alias = "graph")]
    index: Option<PathBuf>,
    /// Ground truth ivecs (0-based rows); computed exactly when absent.
    #[arg(long)]
    gt: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Pool size; `run.L` from the config (default 128) when absent.
    #[arg(long = "L", alias = "l")]
    l: Option<usize>,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Per-query results as JSON lines: ids, squared distances, latency, stats.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Gt {
    #[arg(long)]
    base: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long, default_value_t = 100)]
    k: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Workload {
    Sliding,
    Expiration,
    Clustered,
    Growth,
}

#[derive(Args)]
struct TraceArgs {
    #[arg(long, value_enum, default_value = "sliding")]
    workload: Workload,
    /// Number of steps (sliding, expiration).
    #[arg(long, default_value_t = 200)]
    t_max: usize,
    /// Checkpoint interval in steps (expiration, growth).
    #[arg(long, default_value_t = 10)]
    checkpoint_every: usize,
    /// Operations (growth).
    #[arg(long, default_value_t = 10_000)]
    n_ops: usize,
    #[arg(long, default_value_t = 0.9)]
    insert_ratio: f64,
    #[arg(long, default_value_t = 64)]
    clusters: usize,
    #[arg(long, default_value_t = 5)]
    rounds: usize,
    /// Queries evaluated at every checkpoint (0: all in the query file).
    #[arg(long, default_value_t = 0)]
    n_queries: usize,
    /// Searches issued at every non-checkpoint step.
    #[arg(long, default_value_t = 0)]
    searches_per_step: usize,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct GenTrace {
    #[arg(long)]
    base: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    #[command(flatten)]
    trace: TraceArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Run {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    queries: PathBuf,
    /// Trace to replay; generated from the workload flags (and written
    /// here) when the file does not exist.
    #[arg(long)]
    trace: PathBuf,
    #[command(flatten)]
    gen: TraceArgs,
    /// JSON-lines metrics output; stdout when absent.
    #[arg(long)]
    metrics: Option<PathBuf>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    qps: Option<f64>,
}

#[derive(Args)]
struct BenchCache {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long)]
    trace: PathBuf,
    #[command(flatten)]
    gen: TraceArgs,
    #[arg(long, value_delimiter = ',', default_value = "wavp,lru,lfu,lrfu")]
    policies: Vec<Policy>,
}

#[derive(Args)]
struct Spread {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 0.1)]
    fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn load(path: &Path) -> Result<Dataset> {
    read_vectors(path).with_context(|| format!("reading {}", path.display()))
}

fn run_config(common: &Common, dim: usize, capacity: usize) -> Result<RunConfig> {
    RunConfig::load(common.config.as_deref(), dim, capacity)
}

fn make_trace(args: &TraceArgs, base: &Dataset, queries: &Dataset) -> Result<Trace> {
    let n_queries = if args.n_queries == 0 {
        queries.len()
    } else {
        args.n_queries.min(queries.len())
    };
    let mut plan = SearchPlan::new(n_queries, args.k);
    plan.per_step = args.searches_per_step;
    plan.seed = args.seed;
    match args.workload {
        Workload::Sliding => sliding_window(base.len(), args.t_max, plan, args.seed),
        Workload::Expiration => expiration(
            base.len(),
            args.t_max,
            args.checkpoint_every,
            plan,
            args.seed,
        ),
        Workload::Clustered => {
            let params = ClusteredParams {
                clusters: args.clusters,
                rounds: args.rounds,
                ..ClusteredParams::default()
            };
            clustered(base, params, plan, args.seed)
        }
        Workload::Growth => growth(
            base.len(),
            args.n_ops,
            args.insert_ratio,
            args.checkpoint_every,
            plan,
            args.seed,
        ),
    }
}

fn trace_for(path: &Path, args: &TraceArgs, base: &Dataset, queries: &Dataset) -> Result<Trace> {
    if path.exists() {
        return Trace::read(path);
    }
    let trace = make_trace(args, base, queries)?;
    trace.write(path)?;
    eprintln!("wrote trace {}", path.display());
    Ok(trace)
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string(value)?);
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::GenData(a) => {
            let (base, queries) = mixture_pair(MixtureSpec::new(a.dim, a.seed), a.n, a.queries);
            write_fvecs(&a.base_out, &base)?;
            write_fvecs(&a.queries_out, &queries)?;
        }
        Command::Build(a) => {
            let base = load(&a.common.base)?;
            let cfg = run_config(&a.common, base.dim(), base.len())?;
            let started = std::time::Instant::now();
            let index = StreamingIndex::build(cfg.index, &base)?;
            eprintln!("built {} vertices in {:.1?}", base.len(), started.elapsed());
            GraphFile::from_graph(index.graph(), base.dim()).write(&a.out)?;
        }
        Command::Search(a) => {
            let base = load(&a.common.base)?;
            let queries = load(&a.queries)?;
            let cfg = run_config(&a.common, base.dim(), base.len())?;
            let l = a.l.unwrap_or(cfg.l).max(a.k);
            let warm_up = cfg.warm_up && cfg.index.cache.policy != Policy::ColdOnly;
            let index = match &a.index {
                Some(path) => {
                    let file = GraphFile::read(path)?;
                    if file.lists.len() != base.len() {
                        bail!(
                            "graph has {} vertices, base has {}",
                            file.lists.len(),
                            base.len()
                        );
                    }
                    let index = StreamingIndex::new(cfg.index)?;
                    index.load_lists(&base, &file.lists)?;
                    index
                }
                None => StreamingIndex::build(cfg.index, &base)?,
            };
            let truth: Vec<Vec<u32>> = match &a.gt {
                Some(path) => read_ivecs(path)?
                    .into_iter()
                    .map(|r| r.into_iter().map(|x| x as u32 + 1).collect())
                    .collect(),
                None => queries
                    .iter()
                    .map(|q| {
                        let items = base.iter().enumerate().map(|(i, v)| (i as u32 + 1, v));
                        exact_top_k(q, items, a.k)
                            .into_iter()
                            .map(|e| e.0)
                            .collect()
                    })
                    .collect(),
            };
            if warm_up {
                index.warm_up(None)?;
            }
            let rows: Vec<&[f32]> = queries.iter().collect();
            let started = std::time::Instant::now();
            let outs = index.search_batch(&rows, a.k, l, a.seed, 0)?;
            let elapsed = started.elapsed().as_secs_f64();
            let ids: Vec<Vec<u32>> = outs.iter().map(|o| o.ids.clone()).collect();
            if let Some(path) = &a.out {
                let mut w = BufWriter::new(File::create(path)?);
                for (i, o) in outs.iter().enumerate() {
                    let st = &o.stats;
                    let line = serde_json::json!({
                        "query": i,
                        "ids": o.ids,
                        "distances": o.distances,
                        "latency_ms": st.latency.as_secs_f64() * 1e3,
                        "stats": {
                            "hot_hits": st.hot_hits,
                            "cold_computes": st.cold_computes,
                            "promotions": st.promotions,
                            "modeled_cost": st.modeled_cost,
                            "iterations": st.iterations,
                            "hot_list_reads": st.hot_list_reads,
                            "miss_rate": st.miss_rate(),
                        },
                    });
                    writeln!(w, "{line}")?;
                }
                w.flush()?;
            }
            let (stats, n) = index.search_totals();
            print_json(&serde_json::json!({
                "queries": n,
                "k": a.k,
                "L": l,
                "recall_at_k": mean_recall(&ids, &truth, a.k),
                "search_throughput": n as f64 / elapsed,
                "miss_rate": stats.miss_rate(),
                "modeled_cost": stats.modeled_cost,
            }))?;
        }
        Command::Gt(a) => {
            let base = load(&a.base)?;
            let queries = load(&a.queries)?;
            let rows: Vec<Vec<i32>> = queries
                .iter()
                .map(|q| {
                    let items = base.iter().enumerate().map(|(i, v)| (i as u32, v));
                    exact_top_k(q, items, a.k)
                        .into_iter()
                        .map(|e| e.0 as i32)
                        .collect()
                })
                .collect();
            write_ivecs(&a.out, &rows)?;
        }
        Command::GenTrace(a) => {
            let base = load(&a.base)?;
            let queries = load(&a.queries)?;
            make_trace(&a.trace, &base, &queries)?.write(&a.out)?;
        }
        Command::Run(a) => {
            let base = load(&a.common.base)?;
            let queries = load(&a.queries)?;
            let trace = trace_for(&a.trace, &a.gen, &base, &queries)?;
            let mut cfg = run_config(&a.common, base.dim(), allocations(&trace))?;
            if let Some(b) = a.batch_size {
                cfg.batch_size = b;
            }
            if a.qps.is_some() {
                cfg.qps = a.qps;
            }
            let mut out: Box<dyn Write> = match &a.metrics {
                Some(p) => Box::new(BufWriter::new(File::create(p)?)),
                None => Box::new(std::io::stdout().lock()),
            };
            let res = run_trace(&trace, &base, &queries, &cfg, |r| {
                writeln!(out, "{}", serde_json::to_string(r)?)?;
                Ok(())
            })?;
            out.flush()?;
            drop(out);
            eprintln!("{}", serde_json::to_string(&res.summary)?);
        }
        Command::BenchCache(a) => {
            let base = load(&a.common.base)?;
            let queries = load(&a.queries)?;
            let trace = trace_for(&a.trace, &a.gen, &base, &queries)?;
            let cfg = run_config(&a.common, base.dim(), allocations(&trace))?;
            for r in bench_cache(&trace, &base, &queries, &cfg, &a.policies)? {
                print_json(&r)?;
            }
        }
        Command::MeasureDeletionSpread(a) => {
            let base = load(&a.common.base)?;
            let cfg = run_config(&a.common, base.dim(), base.len())?;
            let index = StreamingIndex::build(cfg.index, &base)?;
            print_json(&measure_deletion_spread(index.graph(), a.fraction, a.seed))?;
        }
    }
    Ok(())
}
