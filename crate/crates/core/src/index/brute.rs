//! Exhaustive double loops. No pruning, no blocking, single-threaded.

use crate::distance::sq_euclidean;
use crate::pointset::PointSet;

use super::{kth_smallest, Membership};

/// Squared distance from every reference point to its k-th nearest other point.
pub(crate) fn kth_sq_distances(reference: &PointSet, k: usize) -> Vec<f32> {
    let n = reference.n();
    let mut row = Vec::with_capacity(n);
    (0..n)
        .map(|i| {
            row.clear();
            let a = reference.row(i);
            for j in 0..n {
                if j != i {
                    row.push(sq_euclidean(a, reference.row(j)));
                }
            }
            kth_smallest(&mut row, k)
        })
        .collect()
}

pub(crate) fn membership(reference: &PointSet, thresholds: &[f32], query: &PointSet) -> Membership {
    let mut counts = vec![0u32; query.n()];
    let mut hits = vec![false; reference.n()];
    for (j, q) in query.rows().enumerate() {
        for (i, r) in reference.rows().enumerate() {
            if sq_euclidean(q, r) < thresholds[i] {
                counts[j] += 1;
                hits[i] = true;
            }
        }
    }
    Membership { counts, hits }
}
