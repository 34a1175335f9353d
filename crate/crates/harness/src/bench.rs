//! Cache-policy ablation: one trace replayed under each policy.

use anyhow::Result;
use serde::Serialize;
use tierann::cache::Policy;
use tierann::store::Dataset;

use crate::runner::{run_trace, RunConfig, RunSummary};
use crate::workload::Trace;

#[derive(Debug, Clone, Serialize)]
pub struct PolicyResult {
    pub policy: String,
    pub summary: RunSummary,
}

/// Replays `trace` once per policy with otherwise identical settings.
pub fn bench_cache(
    trace: &Trace,
    base: &Dataset,
    queries: &Dataset,
    cfg: &RunConfig,
    policies: &[Policy],
) -> Result<Vec<PolicyResult>> {
    policies
        .iter()
        .map(|&policy| {
            let mut c = cfg.clone();
            c.index.cache.policy = policy;
            let res = run_trace(trace, base, queries, &c, |_| Ok(()))?;
            Ok(PolicyResult {
                policy: policy.to_string(),
                summary: res.summary,
            })
        })
        .collect()
}
