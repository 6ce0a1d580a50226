//! Blocked matrix-product kernel for high-dimensional reference sets.
//!
//! Squared distances are first estimated for whole tiles at once as
//! `‖a‖² + ‖b‖² − 2⟨a, b⟩` with an `f32` GEMM on mean-centered data. Each
//! estimate carries a rigorous error bound (see [`filter_error_coeff`]);
//! pairs the bound cannot decide are recomputed with [`sq_euclidean`]. The
//! results are therefore identical to the brute-force loops.

use rayon::prelude::*;

use crate::distance::{filter_error_coeff, sq_euclidean};
use crate::pointset::PointSet;

use super::{kth_smallest, Membership};

const TILE: usize = 256;
const QUERY_TILE: usize = 128;
const REF_TILE: usize = 4096;

#[derive(Debug, Clone)]
pub(crate) struct Blocked {
    d: usize,
    mean: Vec<f32>,
    centered: Vec<f32>,
    norms: Vec<f32>,
    coeff: f32,
}

/// `out[i * n + j] = ⟨a_i, b_j⟩` for row-major `a` (m × d) and `b` (n × d).
fn gram(a: &[f32], m: usize, b: &[f32], n: usize, d: usize, out: &mut [f32]) {
    assert!(a.len() >= m * d && b.len() >= n * d && out.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: the assertion above keeps every strided access in bounds.
    unsafe {
        matrixmultiply::sgemm(
            m,
            d,
            n,
            1.0,
            a.as_ptr(),
            d as isize,
            1,
            b.as_ptr(),
            1,
            d as isize,
            0.0,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn sq_norms(centered: &[f32], d: usize) -> Vec<f32> {
    centered
        .chunks_exact(d)
        .map(|r| r.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>() as f32)
        .collect()
}

/// Streaming state for one row's k-NN radius: the k smallest upper bounds
/// seen so far and every pair whose lower bound does not exceed the k-th.
struct RowState {
    top: Vec<f32>,
    candidates: Vec<(u32, f32)>,
}

impl Blocked {
    pub(crate) fn build(reference: &PointSet) -> Blocked {
        let d = reference.d();
        let n = reference.n().max(1);
        let mut sums = vec![0f64; d];
        for r in reference.rows() {
            for (s, &v) in sums.iter_mut().zip(r) {
                *s += v as f64;
            }
        }
        let mean: Vec<f32> = sums.iter().map(|s| (s / n as f64) as f32).collect();
        let centered = center(reference.data(), &mean);
        let norms = sq_norms(&centered, d);
        Blocked {
            d,
            mean,
            centered,
            norms,
            coeff: filter_error_coeff(d),
        }
    }

    fn n(&self) -> usize {
        self.norms.len()
    }

    pub(crate) fn kth_sq_distances(&self, reference: &PointSet, k: usize) -> Vec<f32> {
        let n = self.n();
        let d = self.d;
        let mut states: Vec<RowState> = (0..n)
            .map(|_| RowState {
                top: Vec::with_capacity(k + 1),
                candidates: Vec::new(),
            })
            .collect();
        let mut bounds = vec![f32::INFINITY; n];
        let mut g = vec![0f32; TILE * TILE];
        let cap = 8 * k + 64;

        let offer = |states: &mut [RowState], bounds: &mut [f32], row: usize, other: usize, lb: f32, ub: f32| {
            let st = &mut states[row];
            st.candidates.push((other as u32, lb));
            if st.top.len() < k || ub < st.top[k - 1] {
                let at = st.top.partition_point(|&v| v <= ub);
                st.top.insert(at, ub);
                st.top.truncate(k);
                if st.top.len() == k {
                    bounds[row] = st.top[k - 1];
                }
            }
            if st.candidates.len() > cap {
                let bound = bounds[row];
                st.candidates.retain(|c| c.1 <= bound);
            }
        };

        for i0 in (0..n).step_by(TILE) {
            let mi = TILE.min(n - i0);
            let a = &self.centered[i0 * d..(i0 + mi) * d];
            for j0 in (i0..n).step_by(TILE) {
                let nj = TILE.min(n - j0);
                let b = &self.centered[j0 * d..(j0 + nj) * d];
                gram(a, mi, b, nj, d, &mut g);
                for ii in 0..mi {
                    let ia = i0 + ii;
                    let na = self.norms[ia];
                    let row = &g[ii * nj..(ii + 1) * nj];
                    let jstart = if j0 == i0 { ii + 1 } else { 0 };
                    for jj in jstart..nj {
                        let jb = j0 + jj;
                        let nb = self.norms[jb];
                        let est = (na + nb) - 2.0 * row[jj];
                        let err = self.coeff * (na + nb);
                        let lb = est - err;
                        if lb <= bounds[ia] {
                            offer(&mut states, &mut bounds, ia, jb, lb, est + err);
                        }
                        if lb <= bounds[jb] {
                            offer(&mut states, &mut bounds, jb, ia, lb, est + err);
                        }
                    }
                }
            }
        }

        states
            .into_par_iter()
            .enumerate()
            .map(|(i, st)| {
                let bound = bounds[i];
                let a = reference.row(i);
                let mut exact: Vec<f32> = st
                    .candidates
                    .iter()
                    .filter(|c| c.1 <= bound)
                    .map(|c| sq_euclidean(a, reference.row(c.0 as usize)))
                    .collect();
                kth_smallest(&mut exact, k)
            })
            .collect()
    }

    pub(crate) fn membership(&self, reference: &PointSet, thresholds: &[f32], query: &PointSet) -> Membership {
        let d = self.d;
        let n_ref = self.n();
        let centered_q = center(query.data(), &self.mean);
        let q_norms = sq_norms(&centered_q, d);

        let parts: Vec<(Vec<u32>, Vec<usize>)> = centered_q
            .par_chunks(QUERY_TILE * d)
            .zip(q_norms.par_chunks(QUERY_TILE))
            .enumerate()
            .map(|(tile, (cq, qn))| {
                let mq = qn.len();
                let q0 = tile * QUERY_TILE;
                let mut counts = vec![0u32; mq];
                let mut hit_idx = Vec::new();
                let mut g = vec![0f32; QUERY_TILE * REF_TILE];
                for r0 in (0..n_ref).step_by(REF_TILE) {
                    let nr = REF_TILE.min(n_ref - r0);
                    let b = &self.centered[r0 * d..(r0 + nr) * d];
                    gram(cq, mq, b, nr, d, &mut g);
                    for (jq, count) in counts.iter_mut().enumerate() {
                        let nq = qn[jq];
                        let row = &g[jq * nr..(jq + 1) * nr];
                        for (jr, &dot) in row.iter().enumerate() {
                            let i = r0 + jr;
                            let t = thresholds[i];
                            let nr_i = self.norms[i];
                            let est = (nq + nr_i) - 2.0 * dot;
                            let err = self.coeff * (nq + nr_i);
                            if est - err >= t {
                                continue;
                            }
                            let inside = est + err < t
                                || sq_euclidean(query.row(q0 + jq), reference.row(i)) < t;
                            if inside {
                                *count += 1;
                                hit_idx.push(i);
                            }
                        }
                    }
                }
                (counts, hit_idx)
            })
            .collect();

        let mut counts = Vec::with_capacity(query.n());
        let mut hits = vec![false; n_ref];
        for (c, h) in parts {
            counts.extend(c);
            for i in h {
                hits[i] = true;
            }
        }
        Membership { counts, hits }
    }
}

fn center(data: &[f32], mean: &[f32]) -> Vec<f32> {
    data.chunks_exact(mean.len())
        .flat_map(|r| r.iter().zip(mean).map(|(v, m)| v - m))
        .collect()
}
