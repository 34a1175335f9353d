//! Benchmark harness for the tierann engine: synthetic corpora, streaming
//! workload generators, exact ground truth, a trace runner and metrics.

pub mod bench;
pub mod dataset;
pub mod invariants;
pub mod metrics;
pub mod runner;
pub mod spread;
pub mod stress;
pub mod truth;
pub mod workload;
