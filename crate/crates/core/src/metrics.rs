//! Density, coverage and the precision/recall baselines.
//!
//! With reference spheres `H_i` (radius = distance to the k-th nearest other
//! reference point) and a query batch of `T` points:
//!
//! * density  = (1 / kT) · Σ_j #{ i : q_j ∈ H_i }
//! * coverage = (1 / S)  · #{ i : ∃ j, q_j ∈ H_i }
//! * precision = fraction of query points inside at least one reference sphere
//! * recall    = fraction of reference points inside at least one query sphere
//!
//! Density is unbounded above; the other three lie in `[0, 1]`.

use serde::{Deserialize, Serialize};

use crate::distance::sq_threshold;
use crate::error::{Error, Result};
use crate::index::{brute, check_size, ManifoldIndex, Membership};
use crate::pointset::PointSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub density: f64,
    pub coverage: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precision: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recall: Option<f64>,
    pub k: usize,
    pub n_reference: usize,
    pub n_query: usize,
}

fn require_query(query: &PointSet) -> Result<()> {
    if query.is_empty() {
        return Err(Error::EmptyQuery);
    }
    Ok(())
}

pub(crate) fn density_from_counts(counts: &[u32], k: usize) -> f64 {
    let total: u64 = counts.iter().map(|&c| c as u64).sum();
    total as f64 / (k as f64 * counts.len() as f64)
}

pub(crate) fn coverage_from_hits(hits: &[bool]) -> f64 {
    hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64
}

fn inside_fraction(counts: &[u32]) -> f64 {
    counts.iter().filter(|&&c| c > 0).count() as f64 / counts.len() as f64
}

pub fn density(index: &ManifoldIndex, query: &PointSet) -> Result<f64> {
    require_query(query)?;
    Ok(density_from_counts(&index.membership(query)?.counts, index.k()))
}

pub fn coverage(index: &ManifoldIndex, query: &PointSet) -> Result<f64> {
    require_query(query)?;
    Ok(coverage_from_hits(&index.membership(query)?.hits))
}

/// Fraction of query points lying in the reference manifold.
pub fn precision(index_over_reference: &ManifoldIndex, query: &PointSet) -> Result<f64> {
    require_query(query)?;
    Ok(inside_fraction(&index_over_reference.membership(query)?.counts))
}

/// Fraction of reference points lying in the manifold built over the query.
pub fn recall(index_over_query: &ManifoldIndex, reference: &PointSet) -> Result<f64> {
    require_query(reference)?;
    Ok(inside_fraction(&index_over_query.membership(reference)?.counts))
}

/// Density and coverage (and optionally precision/recall) in one membership pass.
pub fn evaluate(index: &ManifoldIndex, query: &PointSet, with_precision_recall: bool) -> Result<MetricReport> {
    require_query(query)?;
    let m = index.membership(query)?;
    let mut report = report_from_membership(&m, index.k(), index.n_reference());
    if with_precision_recall {
        report.precision = Some(inside_fraction(&m.counts));
        let query_index = ManifoldIndex::build_with(query.clone(), index.k(), index.strategy())?;
        report.recall = Some(recall(&query_index, index.reference())?);
    }
    Ok(report)
}

pub(crate) fn report_from_membership(m: &Membership, k: usize, n_reference: usize) -> MetricReport {
    MetricReport {
        density: density_from_counts(&m.counts, k),
        coverage: coverage_from_hits(&m.hits),
        precision: None,
        recall: None,
        k,
        n_reference,
        n_query: m.counts.len(),
    }
}

/// Density and coverage from explicit O(S²·d + S·T·d) loops with no
/// acceleration. The fast path must reproduce this bit for bit.
pub fn metrics_brute_force(reference: &PointSet, query: &PointSet, k: usize) -> Result<MetricReport> {
    check_size(reference, k)?;
    require_query(query)?;
    if query.d() != reference.d() {
        return Err(Error::Dimension {
            expected: reference.d(),
            got: query.d(),
        });
    }
    let thresholds: Vec<f32> = brute::kth_sq_distances(reference, k)
        .into_iter()
        .map(|s| sq_threshold(s.sqrt()))
        .collect();
    let m = brute::membership(reference, &thresholds, query);
    Ok(report_from_membership(&m, k, reference.n()))
}
