//! Exact kd-tree for low-dimensional reference sets.
//!
//! Pruning uses an `f64` box lower bound shrunk by the worst-case relative
//! error of [`sq_euclidean`], so a subtree is skipped only when no point in
//! it can change the answer under the canonical distance.

use rayon::prelude::*;

use crate::distance::{sq_euclidean, F32_UNIT_ROUNDOFF};
use crate::pointset::PointSet;

use super::Membership;

const LEAF_SIZE: usize = 16;

#[derive(Debug, Clone)]
struct Node {
    start: usize,
    end: usize,
    children: Option<(usize, usize)>,
}

#[derive(Debug, Clone)]
pub(crate) struct KdTree {
    d: usize,
    /// Reference rows in tree order.
    points: Vec<f32>,
    /// `order[pos]` is the original row index of tree position `pos`.
    order: Vec<usize>,
    nodes: Vec<Node>,
    lo: Vec<f32>,
    hi: Vec<f32>,
    /// Squared-distance thresholds in tree order; empty until radii are attached.
    thresholds: Vec<f32>,
    max_threshold: Vec<f32>,
    shrink: f64,
}

impl KdTree {
    pub(crate) fn build(reference: &PointSet) -> KdTree {
        let d = reference.d();
        let n = reference.n();
        let mut tree = KdTree {
            d,
            points: Vec::new(),
            order: (0..n).collect(),
            nodes: Vec::new(),
            lo: Vec::new(),
            hi: Vec::new(),
            thresholds: Vec::new(),
            max_threshold: Vec::new(),
            // Canonical distances are at least (1 - shrink) times the true distance.
            shrink: 1.0 - ((d + 8) as f64 * F32_UNIT_ROUNDOFF * 1.01 + 1e-12),
        };
        if n > 0 {
            let mut order = std::mem::take(&mut tree.order);
            tree.build_node(reference, &mut order, 0, n);
            tree.order = order;
        }
        tree.points = tree
            .order
            .iter()
            .flat_map(|&i| reference.row(i).iter().copied())
            .collect();
        tree
    }

    fn build_node(&mut self, ps: &PointSet, order: &mut [usize], start: usize, end: usize) -> usize {
        let d = self.d;
        let id = self.nodes.len();
        let mut lo = vec![f32::INFINITY; d];
        let mut hi = vec![f32::NEG_INFINITY; d];
        for &i in &order[start..end] {
            for (l, &v) in ps.row(i).iter().enumerate() {
                lo[l] = lo[l].min(v);
                hi[l] = hi[l].max(v);
            }
        }
        self.nodes.push(Node {
            start,
            end,
            children: None,
        });
        let (dim, spread) = (0..d)
            .map(|l| (l, hi[l] - lo[l]))
            .fold((0, f32::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
        self.lo.extend_from_slice(&lo);
        self.hi.extend_from_slice(&hi);
        if end - start <= LEAF_SIZE || spread <= 0.0 {
            return id;
        }
        let mid = start + (end - start) / 2;
        order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            ps.row(a)[dim].total_cmp(&ps.row(b)[dim])
        });
        let left = self.build_node(ps, order, start, mid);
        let right = self.build_node(ps, order, mid, end);
        self.nodes[id].children = Some((left, right));
        id
    }

    /// Attaches per-point squared thresholds (indexed by original row).
    pub(crate) fn set_thresholds(&mut self, thresholds: &[f32]) {
        self.thresholds = self.order.iter().map(|&i| thresholds[i]).collect();
        self.max_threshold = vec![0.0; self.nodes.len()];
        for id in (0..self.nodes.len()).rev() {
            let node = &self.nodes[id];
            self.max_threshold[id] = match node.children {
                Some((l, r)) => self.max_threshold[l].max(self.max_threshold[r]),
                None => self.thresholds[node.start..node.end]
                    .iter()
                    .fold(0.0f32, |m, &t| m.max(t)),
            };
        }
    }

    fn row(&self, pos: usize) -> &[f32] {
        &self.points[pos * self.d..(pos + 1) * self.d]
    }

    /// Lower bound on the canonical squared distance from `q` to any point in `node`.
    fn lower_bound(&self, node: usize, q: &[f32]) -> f64 {
        let lo = &self.lo[node * self.d..(node + 1) * self.d];
        let hi = &self.hi[node * self.d..(node + 1) * self.d];
        let mut sum = 0f64;
        for l in 0..self.d {
            let v = q[l] as f64;
            let gap = if v < lo[l] as f64 {
                lo[l] as f64 - v
            } else if v > hi[l] as f64 {
                v - hi[l] as f64
            } else {
                0.0
            };
            sum += gap * gap;
        }
        sum * self.shrink
    }

    /// k-th smallest squared distance from original row `self_idx` to the other points.
    pub(crate) fn kth_sq_excluding(&self, self_idx: usize, q: &[f32], k: usize) -> f32 {
        let mut best = Vec::with_capacity(k + 1);
        if !self.nodes.is_empty() {
            self.knn_node(0, q, self_idx, k, &mut best);
        }
        best[k - 1]
    }

    fn knn_node(&self, node: usize, q: &[f32], skip: usize, k: usize, best: &mut Vec<f32>) {
        let n = &self.nodes[node];
        match n.children {
            None => {
                for pos in n.start..n.end {
                    if self.order[pos] == skip {
                        continue;
                    }
                    let dist = sq_euclidean(q, self.row(pos));
                    if best.len() < k || dist < best[k - 1] {
                        let at = best.partition_point(|&b| b <= dist);
                        best.insert(at, dist);
                        best.truncate(k);
                    }
                }
            }
            Some((l, r)) => {
                let (lb_l, lb_r) = (self.lower_bound(l, q), self.lower_bound(r, q));
                let order = if lb_l <= lb_r { [(l, lb_l), (r, lb_r)] } else { [(r, lb_r), (l, lb_l)] };
                for (child, lb) in order {
                    if best.len() == k && lb >= best[k - 1] as f64 {
                        continue;
                    }
                    self.knn_node(child, q, skip, k, best);
                }
            }
        }
    }

    pub(crate) fn kth_sq_distances(&self, reference: &PointSet, k: usize) -> Vec<f32> {
        (0..reference.n())
            .into_par_iter()
            .map(|i| self.kth_sq_excluding(i, reference.row(i), k))
            .collect()
    }

    fn visit_containing(&self, node: usize, q: &[f32], on_hit: &mut impl FnMut(usize)) {
        if self.lower_bound(node, q) >= self.max_threshold[node] as f64 {
            return;
        }
        let n = &self.nodes[node];
        match n.children {
            Some((l, r)) => {
                self.visit_containing(l, q, on_hit);
                self.visit_containing(r, q, on_hit);
            }
            None => {
                for pos in n.start..n.end {
                    if sq_euclidean(q, self.row(pos)) < self.thresholds[pos] {
                        on_hit(self.order[pos]);
                    }
                }
            }
        }
    }

    pub(crate) fn count_containing(&self, q: &[f32]) -> u32 {
        let mut count = 0;
        if !self.nodes.is_empty() {
            self.visit_containing(0, q, &mut |_| count += 1);
        }
        count
    }

    pub(crate) fn membership(&self, n_reference: usize, query: &PointSet) -> Membership {
        const CHUNK: usize = 256;
        let parts: Vec<(Vec<u32>, Vec<usize>)> = query
            .data()
            .par_chunks(CHUNK * self.d)
            .map(|chunk| {
                let mut counts = Vec::with_capacity(CHUNK);
                let mut hit_idx = Vec::new();
                for q in chunk.chunks_exact(self.d) {
                    let mut c = 0u32;
                    if !self.nodes.is_empty() {
                        self.visit_containing(0, q, &mut |i| {
                            c += 1;
                            hit_idx.push(i);
                        });
                    }
                    counts.push(c);
                }
                (counts, hit_idx)
            })
            .collect();
        let mut counts = Vec::with_capacity(query.n());
        let mut hits = vec![false; n_reference];
        for (c, h) in parts {
            counts.extend(c);
            for i in h {
                hits[i] = true;
            }
        }
        Membership { counts, hits }
    }
}
