//! Streaming workload traces and their four generators.
//!
//! A trace is a list of steps; each step holds operations that refer to
//! vectors by row index into a companion base file and to queries by row
//! index into a query file. Host ids in `D` operations are predicted from
//! allocation order: a build of `n` rows takes ids `1..=n` and every insert
//! takes the next id.
//!
//! Text format, one operation per line:
//!
//! ```text
//! # step <t>
//! B <n>          build from the first n base rows
//! I <row>        insert base row
//! D <h_id>       delete
//! S <query> <k>  search
//! C              checkpoint: score this step's searches
//! ```

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tierann::distance::squared_l2;
use tierann::store::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Build(usize),
    Insert(usize),
    Delete(u32),
    Search { query: usize, k: usize },
    Checkpoint,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub index: usize,
    pub ops: Vec<Op>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Trace {
    pub steps: Vec<Step>,
}

/// Search settings shared by the generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchPlan {
    pub queries: usize,
    pub k: usize,
    /// Searches issued at non-checkpoint steps.
    pub per_step: usize,
    pub seed: u64,
}

impl SearchPlan {
    pub fn new(queries: usize, k: usize) -> Self {
        Self {
            queries,
            k,
            per_step: 0,
            seed: 0,
        }
    }
}

/// Tracks id assignment and liveness while a generator emits operations.
struct Builder {
    trace: Trace,
    next_id: u32,
    live: BTreeSet<u32>,
    row_of: Vec<usize>,
    plan: SearchPlan,
    rng: ChaCha8Rng,
}

impl Builder {
    fn new(plan: SearchPlan, seed: u64) -> Self {
        Self {
            trace: Trace::default(),
            next_id: 1,
            live: BTreeSet::new(),
            row_of: vec![usize::MAX],
            plan,
            rng: ChaCha8Rng::seed_from_u64(seed ^ plan.seed.rotate_left(17)),
        }
    }

    fn step(&mut self) -> &mut Vec<Op> {
        let index = self.trace.steps.len() + 1;
        self.trace.steps.push(Step {
            index,
            ops: Vec::new(),
        });
        &mut self.trace.steps.last_mut().unwrap().ops
    }

    fn ops(&mut self) -> &mut Vec<Op> {
        &mut self.trace.steps.last_mut().expect("open step").ops
    }

    fn build(&mut self, n: usize) -> Vec<u32> {
        self.ops().push(Op::Build(n));
        (0..n).map(|row| self.assign(row)).collect()
    }

    fn assign(&mut self, row: usize) -> u32 {
        let h = self.next_id;
        self.next_id += 1;
        self.live.insert(h);
        self.row_of.push(row);
        h
    }

    fn insert(&mut self, row: usize) -> u32 {
        self.ops().push(Op::Insert(row));
        self.assign(row)
    }

    fn delete(&mut self, h: u32) {
        assert!(self.live.remove(&h), "generator deleted a non-live id");
        self.ops().push(Op::Delete(h));
    }

    fn searches(&mut self, checkpoint: bool) {
        let SearchPlan {
            queries,
            k,
            per_step,
            ..
        } = self.plan;
        if queries == 0 {
            return;
        }
        if checkpoint {
            for q in 0..queries {
                self.ops().push(Op::Search { query: q, k });
            }
            self.ops().push(Op::Checkpoint);
        } else {
            for _ in 0..per_step {
                let q = self.rng.random_range(0..queries);
                self.ops().push(Op::Search { query: q, k });
            }
        }
    }
}

/// SlidingWindow: step `t` inserts segment `t`; from step `T/2 + 1` on, the
/// segment inserted `T/2` steps earlier is deleted. Step 1 builds from
/// segment 1. Checkpoints start at `T/2 + 1`.
pub fn sliding_window(n: usize, t_max: usize, plan: SearchPlan, seed: u64) -> Result<Trace> {
    ensure!(
        t_max >= 2 && n >= t_max,
        "sliding window needs n >= T_max >= 2"
    );
    let seg = n / t_max;
    let half = t_max / 2;
    let mut b = Builder::new(plan, seed);
    let mut segments: Vec<Vec<u32>> = Vec::with_capacity(t_max);
    for t in 1..=t_max {
        b.step();
        let ids = if t == 1 {
            b.build(seg)
        } else {
            ((t - 1) * seg..t * seg).map(|row| b.insert(row)).collect()
        };
        segments.push(ids);
        if t > half {
            for h in segments[t - half - 1].clone() {
                b.delete(h);
            }
        }
        b.searches(t > half);
    }
    Ok(b.trace)
}

/// Lifetime classes of the ExpirationTime workload with weights 10:2:1.
pub const LIFETIMES: [(usize, u32); 3] = [(10, 10), (50, 2), (100, 1)];

pub fn sample_lifetime<R: Rng + ?Sized>(rng: &mut R) -> usize {
    let total: u32 = LIFETIMES.iter().map(|l| l.1).sum();
    let mut x = rng.random_range(0..total);
    for (life, w) in LIFETIMES {
        if x < w {
            return life;
        }
        x -= w;
    }
    unreachable!()
}

/// ExpirationTime: each step inserts `n / T` vectors with a sampled
/// lifetime; a vector inserted at step `t` with lifetime `l` is deleted at
/// step `t + l` if that is within the trace. Checkpoints every
/// `checkpoint_every` steps.
pub fn expiration(
    n: usize,
    t_max: usize,
    checkpoint_every: usize,
    plan: SearchPlan,
    seed: u64,
) -> Result<Trace> {
    ensure!(t_max >= 1 && n >= t_max, "expiration needs n >= T_max >= 1");
    let per = n / t_max;
    let mut b = Builder::new(plan, seed);
    let mut life_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut expiry: Vec<Vec<u32>> = vec![Vec::new(); t_max + 1];
    for t in 1..=t_max {
        b.step();
        let ids = if t == 1 {
            b.build(per)
        } else {
            ((t - 1) * per..t * per).map(|row| b.insert(row)).collect()
        };
        for h in ids {
            let at = t + sample_lifetime(&mut life_rng);
            if at <= t_max {
                expiry[at].push(h);
            }
        }
        for h in std::mem::take(&mut expiry[t]) {
            b.delete(h);
        }
        b.searches(checkpoint_every > 0 && t % checkpoint_every == 0);
    }
    Ok(b.trace)
}

/// Seeded Lloyd's k-means with farthest-point initialization. Returns the
/// cluster of every row.
pub fn kmeans(data: &Dataset, k: usize, max_iter: usize, seed: u64) -> Result<Vec<usize>> {
    let n = data.len();
    ensure!(
        k >= 1 && n >= k,
        "k-means needs at least {k} points, got {n}"
    );
    let dim = data.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers: Vec<Vec<f32>> = vec![data.row(rng.random_range(0..n)).to_vec()];
    let mut nearest: Vec<f32> = data.iter().map(|v| squared_l2(v, &centers[0])).collect();
    while centers.len() < k {
        let far = (0..n)
            .max_by(|&a, &b| nearest[a].total_cmp(&nearest[b]).then(b.cmp(&a)))
            .unwrap();
        centers.push(data.row(far).to_vec());
        let c = centers.last().unwrap();
        for (i, v) in data.iter().enumerate() {
            nearest[i] = nearest[i].min(squared_l2(v, c));
        }
    }
    let mut assign = vec![usize::MAX; n];
    for _ in 0..max_iter {
        let mut moved = false;
        for (i, v) in data.iter().enumerate() {
            let best = (0..k)
                .min_by(|&a, &b| {
                    squared_l2(v, &centers[a])
                        .total_cmp(&squared_l2(v, &centers[b]))
                        .then(a.cmp(&b))
                })
                .unwrap();
            if assign[i] != best {
                assign[i] = best;
                moved = true;
            }
        }
        if !moved {
            break;
        }
        let mut sums = vec![vec![0f64; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, v) in data.iter().enumerate() {
            counts[assign[i]] += 1;
            for (s, x) in sums[assign[i]].iter_mut().zip(v) {
                *s += *x as f64;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = sums[c]
                    .iter()
                    .map(|s| (s / counts[c] as f64) as f32)
                    .collect();
            }
        }
    }
    Ok(assign)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusteredParams {
    pub clusters: usize,
    pub rounds: usize,
    pub insert_fraction: f64,
    pub delete_fraction: f64,
    pub kmeans_iters: usize,
}

impl Default for ClusteredParams {
    fn default() -> Self {
        Self {
            clusters: 64,
            rounds: 5,
            insert_fraction: 0.5,
            delete_fraction: 0.3,
            kmeans_iters: 25,
        }
    }
}

/// Clustered: k-means partitions the data; each round inserts a random
/// fraction of every cluster's remaining points (the last round inserts all
/// of them), checkpoints, then deletes a random fraction of the live points
/// of the round's designated clusters (`c % rounds == round`) and
/// checkpoints again.
pub fn clustered(
    data: &Dataset,
    params: ClusteredParams,
    plan: SearchPlan,
    seed: u64,
) -> Result<Trace> {
    let assign = kmeans(data, params.clusters, params.kmeans_iters, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xC1u64);
    let mut pending: Vec<Vec<usize>> = vec![Vec::new(); params.clusters];
    for (row, &c) in assign.iter().enumerate() {
        pending[c].push(row);
    }
    for p in &mut pending {
        p.shuffle(&mut rng);
    }
    let mut live_by_cluster: Vec<Vec<u32>> = vec![Vec::new(); params.clusters];
    let mut b = Builder::new(plan, seed);
    for round in 0..params.rounds {
        b.step();
        let last = round + 1 == params.rounds;
        for c in 0..params.clusters {
            let take = if last {
                pending[c].len()
            } else {
                (pending[c].len() as f64 * params.insert_fraction).round() as usize
            };
            let rows: Vec<usize> = pending[c].drain(..take).collect();
            for row in rows {
                let h = b.insert(row);
                live_by_cluster[c].push(h);
            }
        }
        b.searches(true);
        b.step();
        for (c, live) in live_by_cluster.iter_mut().enumerate() {
            if c % params.rounds != round {
                continue;
            }
            live.shuffle(&mut rng);
            let n = (live.len() as f64 * params.delete_fraction).round() as usize;
            for h in live.drain(..n) {
                b.delete(h);
            }
        }
        b.searches(true);
    }
    Ok(b.trace)
}

/// Insert-heavy growth: builds from the first `n / 10` rows, then shuffles
/// `n_ops` single-operation steps mixing inserts and searches at
/// `insert_ratio`. Every `checkpoint_every` steps, a checkpoint step
/// searches the full query set.
pub fn growth(
    n: usize,
    n_ops: usize,
    insert_ratio: f64,
    checkpoint_every: usize,
    plan: SearchPlan,
    seed: u64,
) -> Result<Trace> {
    ensure!(
        (0.0..=1.0).contains(&insert_ratio),
        "insert ratio must lie in [0, 1]"
    );
    let seed_rows = (n / 10).max(1);
    let inserts = (n_ops as f64 * insert_ratio).round() as usize;
    ensure!(
        seed_rows + inserts <= n,
        "growth needs {} rows, dataset has {n}",
        seed_rows + inserts
    );
    let mut kinds: Vec<bool> = (0..n_ops).map(|i| i < inserts).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    kinds.shuffle(&mut rng);
    let mut b = Builder::new(plan, seed);
    b.step();
    b.build(seed_rows);
    let mut next_row = seed_rows;
    for (i, is_insert) in kinds.into_iter().enumerate() {
        b.step();
        if is_insert {
            b.insert(next_row);
            next_row += 1;
        } else if plan.queries > 0 {
            let q = rng.random_range(0..plan.queries);
            b.ops().push(Op::Search {
                query: q,
                k: plan.k,
            });
        }
        if checkpoint_every > 0 && (i + 1) % checkpoint_every == 0 {
            b.step();
            b.searches(true);
        }
    }
    Ok(b.trace)
}

impl Trace {
    pub fn ops(&self) -> impl Iterator<Item = &Op> {
        self.steps.iter().flat_map(|s| s.ops.iter())
    }

    pub fn count(&self, pred: impl Fn(&Op) -> bool) -> usize {
        self.ops().filter(|op| pred(op)).count()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for step in &self.steps {
            let _ = writeln!(s, "# step {}", step.index);
            for op in &step.ops {
                let _ = match op {
                    Op::Build(n) => writeln!(s, "B {n}"),
                    Op::Insert(row) => writeln!(s, "I {row}"),
                    Op::Delete(h) => writeln!(s, "D {h}"),
                    Op::Search { query, k } => writeln!(s, "S {query} {k}"),
                    Op::Checkpoint => writeln!(s, "C"),
                };
            }
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut trace = Trace::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let ctx = || format!("trace line {}: {line:?}", n + 1);
            if let Some(rest) = line.strip_prefix('#') {
                let mut parts = rest.split_whitespace();
                if parts.next() == Some("step") {
                    let index = parts.next().with_context(ctx)?.parse().with_context(ctx)?;
                    trace.steps.push(Step {
                        index,
                        ops: Vec::new(),
                    });
                }
                continue;
            }
            let mut parts = line.split_whitespace();
            let tag = parts.next().with_context(ctx)?;
            let mut num = || -> Result<u64> {
                parts
                    .next()
                    .with_context(ctx)?
                    .parse::<u64>()
                    .with_context(ctx)
            };
            let op = match tag {
                "B" => Op::Build(num()? as usize),
                "I" => Op::Insert(num()? as usize),
                "D" => Op::Delete(u32::try_from(num()?).with_context(ctx)?),
                "S" => Op::Search {
                    query: num()? as usize,
                    k: num()? as usize,
                },
                "C" => Op::Checkpoint,
                _ => bail!("{}: unknown operation", ctx()),
            };
            if trace.steps.is_empty() {
                trace.steps.push(Step {
                    index: 1,
                    ops: Vec::new(),
                });
            }
            trace.steps.last_mut().unwrap().ops.push(op);
        }
        Ok(trace)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Replays the trace through a reference state machine: deletes target
    /// live ids, rows exist, searches at checkpoints see a nonempty index.
    /// Returns the number of rows and queries the trace references.
    pub fn validate(&self, base_rows: usize, queries: usize) -> Result<()> {
        let mut live: HashSet<u32> = HashSet::new();
        let mut next_id = 1u32;
        for step in &self.steps {
            for op in &step.ops {
                match *op {
                    Op::Build(n) => {
                        ensure!(next_id == 1, "step {}: build after allocation", step.index);
                        ensure!(
                            n <= base_rows,
                            "step {}: build of {n} rows exceeds base",
                            step.index
                        );
                        live.extend(1..=n as u32);
                        next_id = n as u32 + 1;
                    }
                    Op::Insert(row) => {
                        ensure!(
                            row < base_rows,
                            "step {}: row {row} out of range",
                            step.index
                        );
                        live.insert(next_id);
                        next_id += 1;
                    }
                    Op::Delete(h) => {
                        ensure!(
                            live.remove(&h),
                            "step {}: delete of absent id {h}",
                            step.index
                        );
                    }
                    Op::Search { query, .. } => {
                        ensure!(
                            query < queries,
                            "step {}: query {query} out of range",
                            step.index
                        );
                    }
                    Op::Checkpoint => {
                        ensure!(
                            !live.is_empty(),
                            "step {}: checkpoint on empty index",
                            step.index
                        );
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan() -> SearchPlan {
        SearchPlan::new(5, 10)
    }

    fn step_ops(trace: &Trace, t: usize) -> &[Op] {
        &trace.steps[t - 1].ops
    }

    #[test]
    fn sliding_window_shape() {
        let trace = sliding_window(200_000, 200, plan(), 1).unwrap();
        assert_eq!(trace.steps.len(), 200);
        assert_eq!(step_ops(&trace, 1)[0], Op::Build(1000));
        let s101 = step_ops(&trace, 101);
        assert_eq!(
            s101.iter().filter(|o| matches!(o, Op::Insert(_))).count(),
            1000
        );
        assert_eq!(s101[0], Op::Insert(100_000));
        let deleted: Vec<u32> = s101
            .iter()
            .filter_map(|o| {
                if let Op::Delete(h) = o {
                    Some(*h)
                } else {
                    None
                }
            })
            .collect();
        assert_eq!(deleted, (1..=1000).collect::<Vec<u32>>());
        assert!(s101.contains(&Op::Checkpoint));
        let s100 = step_ops(&trace, 100);
        assert!(!s100
            .iter()
            .any(|o| matches!(o, Op::Delete(_) | Op::Checkpoint)));
        // Live count after any step >= 101 is exactly 100 segments.
        let mut live: i64 = 0;
        for (t, step) in trace.steps.iter().enumerate() {
            for op in &step.ops {
                match op {
                    Op::Build(n) => live += *n as i64,
                    Op::Insert(_) => live += 1,
                    Op::Delete(_) => live -= 1,
                    _ => {}
                }
            }
            if t + 1 >= 101 {
                assert_eq!(live, 100_000);
            }
        }
        trace.validate(200_000, 5).unwrap();
    }

    #[test]
    fn sliding_window_rejects_small_input() {
        assert!(sliding_window(10, 200, plan(), 1).is_err());
    }

    #[test]
    fn expiration_lifetimes() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut counts = [0usize; 3];
        let n = 130_000;
        for _ in 0..n {
            match sample_lifetime(&mut rng) {
                10 => counts[0] += 1,
                50 => counts[1] += 1,
                100 => counts[2] += 1,
                _ => unreachable!(),
            }
        }
        let expect = [10.0 / 13.0, 2.0 / 13.0, 1.0 / 13.0];
        for i in 0..3 {
            let got = counts[i] as f64 / n as f64;
            assert!((got - expect[i]).abs() < 0.01, "class {i}: {got}");
        }
    }

    #[test]
    fn expiration_deletes_on_schedule() {
        let trace = expiration(2000, 120, 10, plan(), 4).unwrap();
        trace.validate(2000, 5).unwrap();
        // Replay: each id is deleted exactly 10, 50 or 100 steps after insert.
        let mut born = std::collections::HashMap::new();
        let mut next = 1u32;
        for step in &trace.steps {
            for op in &step.ops {
                match op {
                    Op::Build(n) => {
                        for _ in 0..*n {
                            born.insert(next, step.index);
                            next += 1;
                        }
                    }
                    Op::Insert(_) => {
                        born.insert(next, step.index);
                        next += 1;
                    }
                    Op::Delete(h) => {
                        let age = step.index - born[h];
                        assert!([10, 50, 100].contains(&age), "age {age}");
                    }
                    _ => {}
                }
            }
        }
        // Permanent vectors inserted near the end are never deleted.
        assert!(trace.count(|o| matches!(o, Op::Delete(_))) < born.len());
    }

    #[test]
    fn clustered_structure() {
        let data = crate::dataset::uniform(2000, 4, 3);
        let params = ClusteredParams {
            clusters: 16,
            ..ClusteredParams::default()
        };
        let trace = clustered(&data, params, plan(), 5).unwrap();
        trace.validate(2000, 5).unwrap();
        assert_eq!(trace.count(|o| *o == Op::Checkpoint), 10);
        // Every inserted row is covered exactly once.
        let mut rows: Vec<usize> = trace
            .ops()
            .filter_map(|o| {
                if let Op::Insert(r) = o {
                    Some(*r)
                } else {
                    None
                }
            })
            .collect();
        rows.sort();
        assert_eq!(rows, (0..2000).collect::<Vec<_>>());
        // Deletes in round r hit clusters c with c % 5 == r.
        let assign = kmeans(&data, 16, 25, 5).unwrap();
        let mut row_of = vec![0usize];
        for (t, step) in trace.steps.iter().enumerate() {
            for op in &step.ops {
                match op {
                    Op::Insert(r) => row_of.push(*r),
                    Op::Delete(h) => {
                        let round = t / 2;
                        assert_eq!(assign[row_of[*h as usize]] % 5, round);
                    }
                    _ => {}
                }
            }
        }
    }

    #[test]
    fn kmeans_rejects_tiny_input() {
        assert!(kmeans(&crate::dataset::uniform(10, 2, 1), 64, 25, 1).is_err());
    }

    #[test]
    fn growth_mix() {
        let trace = growth(2000, 1000, 0.9, 0, plan(), 2).unwrap();
        assert_eq!(trace.count(|o| matches!(o, Op::Insert(_))), 900);
        assert_eq!(trace.count(|o| matches!(o, Op::Search { .. })), 100);
        assert_eq!(trace.count(|o| matches!(o, Op::Delete(_))), 0);
        let pure = growth(2000, 1000, 1.0, 0, plan(), 2).unwrap();
        assert_eq!(pure.count(|o| matches!(o, Op::Search { .. })), 0);
        assert_eq!(step_ops(&pure, 1), &[Op::Build(200)]);
    }

    #[test]
    fn text_round_trip_and_determinism() {
        let a = sliding_window(1000, 10, plan(), 3).unwrap();
        let b = sliding_window(1000, 10, plan(), 3).unwrap();
        assert_eq!(a.to_text(), b.to_text());
        assert_eq!(Trace::parse(&a.to_text()).unwrap(), a);
        assert!(Trace::parse("X 1").is_err());
        assert!(Trace::parse("D notanumber").is_err());
    }

    #[test]
    fn validation_catches_bad_deletes() {
        let bad = Trace::parse("# step 1\nB 3\nD 4\n").unwrap();
        assert!(bad.validate(10, 0).is_err());
        let empty = Trace::parse("# step 1\nC\n").unwrap();
        assert!(empty.validate(10, 0).is_err());
    }
}
