//! Synthetic labelled data: isotropic Gaussian blobs in the unit cube.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::pointset::PointSet;
use crate::rng::{stream_rng, STREAM_BLOB_CENTERS, STREAM_BLOB_SAMPLES};

/// Per-coordinate standard deviation used by [`make_blobs`].
pub const DEFAULT_BLOB_STD: f32 = 0.05;

const PLACEMENT_ATTEMPTS: usize = 10_000;

/// A fixed mixture of `n_classes` Gaussians. Sampling the same mixture twice
/// with different seeds gives two i.i.d. draws from one distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct BlobMixture {
    d: usize,
    std: f32,
    centers: Vec<Vec<f32>>,
}

impl BlobMixture {
    /// Places centres uniformly in `[3σ, 1 − 3σ]^d` with pairwise distance at
    /// least `separation · σ`.
    pub fn new(d: usize, n_classes: usize, separation: f32, std: f32, seed: u64) -> Result<Self> {
        if d == 0 || n_classes == 0 {
            return Err(Error::InvalidArgument("blobs need d ≥ 1 and at least one class".into()));
        }
        if !(separation > 0.0 && std > 0.0 && std < 1.0 / 6.0) {
            return Err(Error::InvalidArgument(format!(
                "need separation > 0 and 0 < std < 1/6, got separation {separation}, std {std}"
            )));
        }
        let mut rng = stream_rng(seed, STREAM_BLOB_CENTERS);
        let (lo, hi) = (3.0 * std, 1.0 - 3.0 * std);
        let min_sq = (separation * std).powi(2);
        let mut centers: Vec<Vec<f32>> = Vec::with_capacity(n_classes);
        for c in 0..n_classes {
            let placed = (0..PLACEMENT_ATTEMPTS).find_map(|_| {
                let cand: Vec<f32> = (0..d).map(|_| rng.random_range(lo..hi)).collect();
                let clear = centers.iter().all(|o| {
                    o.iter().zip(&cand).map(|(a, b)| (a - b) * (a - b)).sum::<f32>() >= min_sq
                });
                clear.then_some(cand)
            });
            match placed {
                Some(cand) => centers.push(cand),
                None => {
                    return Err(Error::InvalidArgument(format!(
                        "could not place centre {c} of {n_classes} at separation {separation}σ in {d} dimensions"
                    )))
                }
            }
        }
        Ok(BlobMixture { d, std, centers })
    }

    pub fn centers(&self) -> &[Vec<f32>] {
        &self.centers
    }

    pub fn n_classes(&self) -> usize {
        self.centers.len()
    }

    /// Draws `n` labelled points; row `i` belongs to class `i mod n_classes`,
    /// so class counts differ by at most one. Values are clipped to `[0, 1]`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<PointSet> {
        if n < self.n_classes() {
            return Err(Error::InvalidArgument(format!(
                "n = {n} is smaller than the number of classes ({})",
                self.n_classes()
            )));
        }
        let mut rng = stream_rng(seed, STREAM_BLOB_SAMPLES);
        let noise = Normal::new(0.0f32, self.std).expect("std validated at construction");
        let mut data = Vec::with_capacity(n * self.d);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let class = i % self.n_classes();
            for &c in &self.centers[class] {
                data.push((c + noise.sample(&mut rng)).clamp(0.0, 1.0));
            }
            labels.push(class as u32);
        }
        PointSet::new(data, self.d, Some(labels))
    }
}

/// `n` points from `n_classes` blobs with standard deviation
/// [`DEFAULT_BLOB_STD`] and centres at least `separation` standard
/// deviations apart. Centres and samples both derive from `seed`.
pub fn make_blobs(n: usize, d: usize, n_classes: usize, separation: f32, seed: u64) -> Result<PointSet> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    BlobMixture::new(d, n_classes, separation, DEFAULT_BLOB_STD, seed)?.sample(n, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_and_underfull() {
        assert!(make_blobs(0, 2, 2, 10.0, 0).is_err());
        assert!(make_blobs(3, 2, 4, 10.0, 0).is_err());
        assert!(make_blobs(10, 0, 2, 10.0, 0).is_err());
    }

    #[test]
    fn classes_balanced_within_one() {
        for seed in 0..5 {
            let ps = make_blobs(103, 4, 5, 6.0, seed).unwrap();
            let mut counts = [0usize; 5];
            for &l in ps.labels().unwrap() {
                counts[l as usize] += 1;
            }
            let (min, max) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
            assert!(max - min <= 1, "{counts:?}");
        }
    }

    #[test]
    fn two_well_separated_blobs_are_linearly_separable() {
        for seed in 0..5 {
            let mix = BlobMixture::new(2, 2, 10.0, DEFAULT_BLOB_STD, seed).unwrap();
            let ps = mix.sample(1000, seed).unwrap();
            let (c0, c1) = (&mix.centers()[0], &mix.centers()[1]);
            let dir: Vec<f32> = c1.iter().zip(c0).map(|(a, b)| a - b).collect();
            let mid: f32 = c0.iter().zip(c1).zip(&dir).map(|((a, b), w)| 0.5 * (a + b) * w).sum();
            let mut margin = f32::INFINITY;
            for (row, &l) in ps.rows().zip(ps.labels().unwrap()) {
                let proj: f32 = row.iter().zip(&dir).map(|(x, w)| x * w).sum::<f32>() - mid;
                let signed = if l == 1 { proj } else { -proj };
                margin = margin.min(signed);
            }
            assert!(margin > 0.0, "seed {seed}: margin {margin}");
        }
    }

    #[test]
    fn same_mixture_different_draws() {
        let mix = BlobMixture::new(8, 3, 6.0, 0.05, 1).unwrap();
        let a = mix.sample(30, 1).unwrap();
        let b = mix.sample(30, 2).unwrap();
        assert_ne!(a.data(), b.data());
        assert_eq!(a, mix.sample(30, 1).unwrap());
        assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
