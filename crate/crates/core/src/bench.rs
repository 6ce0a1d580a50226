//! Wall-clock comparison of the accelerated path against the naive loops.

use std::time::Instant;

use serde::Serialize;

use crate::error::Result;
use crate::index::{ManifoldIndex, SearchStrategy};
use crate::metrics::{evaluate, metrics_brute_force, MetricReport};
use crate::pointset::PointSet;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchResult {
    pub n_reference: usize,
    pub n_query: usize,
    pub dim: usize,
    pub k: usize,
    /// Index build plus one membership pass.
    pub fast_seconds: f64,
    pub naive_seconds: f64,
    pub speedup: f64,
    /// Whether both paths produced the same report.
    pub identical: bool,
    pub report: MetricReport,
}

/// Times density and coverage computed both ways on the same inputs.
pub fn compare_paths(reference: &PointSet, query: &PointSet, k: usize, strategy: SearchStrategy) -> Result<BenchResult> {
    let start = Instant::now();
    let index = ManifoldIndex::build_with(reference.clone(), k, strategy)?;
    let fast = evaluate(&index, query, false)?;
    let fast_seconds = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let naive = metrics_brute_force(reference, query, k)?;
    let naive_seconds = start.elapsed().as_secs_f64();

    Ok(BenchResult {
        n_reference: reference.n(),
        n_query: query.n(),
        dim: reference.d(),
        k,
        fast_seconds,
        naive_seconds,
        speedup: naive_seconds / fast_seconds.max(1e-12),
        identical: fast == naive,
        report: fast,
    })
}
