//! Batch monitoring: sub-batch quantile bands, flagging, and sweeps over
//! admixture fraction and batch size.
//!
//! All randomness is drawn from seeded streams, so identical seeds give
//! identical ensembles, sweeps and verdicts regardless of thread count.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::ManifoldIndex;
use crate::metrics::{evaluate, MetricReport};
use crate::pointset::PointSet;
use crate::rng::{
    stream_rng, STREAM_ADMIX_ADVERSARIAL, STREAM_ADMIX_BENIGN, STREAM_BATCH_SIZE, STREAM_SUBBATCH,
};

pub const QUANTILE_LEVELS: [f64; 3] = [0.25, 0.5, 0.75];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricName {
    Density,
    Coverage,
}

impl MetricName {
    pub fn of(self, report: &MetricReport) -> f64 {
        match self {
            MetricName::Density => report.density,
            MetricName::Coverage => report.coverage,
        }
    }
}

/// Per-sub-batch values of one metric and their quartiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandEnsemble {
    pub metric_name: MetricName,
    pub values: Vec<f64>,
    /// Keyed by the level as written in [`QUANTILE_LEVELS`] (`"0.25"`, `"0.5"`, `"0.75"`).
    pub quantiles: BTreeMap<String, f64>,
    pub sub_batch_size: usize,
    pub seed: u64,
}

impl BandEnsemble {
    fn new(metric_name: MetricName, values: Vec<f64>, sub_batch_size: usize, seed: u64) -> Self {
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        let quantiles = QUANTILE_LEVELS
            .iter()
            .map(|&p| (p.to_string(), quantile_sorted(&sorted, p)))
            .collect();
        BandEnsemble {
            metric_name,
            values,
            quantiles,
            sub_batch_size,
            seed,
        }
    }

    pub fn quantile(&self, level: f64) -> Option<f64> {
        self.quantiles.get(&level.to_string()).copied()
    }

    fn require(&self, level: f64) -> Result<f64> {
        self.quantile(level).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "{:?} band is missing the {level} quantile",
                self.metric_name
            ))
        })
    }

    pub fn q25(&self) -> Option<f64> {
        self.quantile(0.25)
    }

    pub fn q50(&self) -> Option<f64> {
        self.quantile(0.5)
    }

    pub fn q75(&self) -> Option<f64> {
        self.quantile(0.75)
    }
}

/// Quantile of ascending `sorted` values by linear interpolation between
/// order statistics (position `(n − 1)·p`).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Density and coverage ensembles computed over the same sub-batches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bands {
    pub density: BandEnsemble,
    pub coverage: BandEnsemble,
}

impl Bands {
    pub fn get(&self, metric: MetricName) -> &BandEnsemble {
        match metric {
            MetricName::Density => &self.density,
            MetricName::Coverage => &self.coverage,
        }
    }
}

/// Shuffles `query` by `seed`, splits it into `⌊T / B⌋` sub-batches of
/// exactly `B` rows (the remainder is dropped) and evaluates each against
/// the same index.
pub fn subbatch_ensemble(index: &ManifoldIndex, query: &PointSet, sub_batch_size: usize, seed: u64) -> Result<Bands> {
    if sub_batch_size == 0 {
        return Err(Error::InvalidArgument("sub-batch size must be positive".into()));
    }
    if query.n() < sub_batch_size {
        return Err(Error::Size(format!(
            "query has {} rows, fewer than one sub-batch of {sub_batch_size}",
            query.n()
        )));
    }
    let mut order: Vec<usize> = (0..query.n()).collect();
    order.shuffle(&mut stream_rng(seed, STREAM_SUBBATCH));
    let reports: Vec<MetricReport> = order
        .chunks_exact(sub_batch_size)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|rows| evaluate(index, &query.select(rows), false))
        .collect::<Result<_>>()?;
    Ok(Bands {
        density: BandEnsemble::new(
            MetricName::Density,
            reports.iter().map(|r| r.density).collect(),
            sub_batch_size,
            seed,
        ),
        coverage: BandEnsemble::new(
            MetricName::Coverage,
            reports.iter().map(|r| r.coverage).collect(),
            sub_batch_size,
            seed,
        ),
    })
}

/// How a band is turned into an acceptance interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "policy")]
pub enum FlagPolicy {
    /// `[q25 − m·IQR, q75 + m·IQR]`.
    Iqr { multiplier: f64 },
    /// `[q25, q75]`.
    QuantileRange,
}

impl Default for FlagPolicy {
    fn default() -> Self {
        FlagPolicy::Iqr { multiplier: 1.5 }
    }
}

impl FlagPolicy {
    pub fn limits(&self, band: &BandEnsemble) -> Result<(f64, f64)> {
        let q25 = band.require(0.25)?;
        let q75 = band.require(0.75)?;
        Ok(match *self {
            FlagPolicy::QuantileRange => (q25, q75),
            FlagPolicy::Iqr { multiplier } => {
                let iqr = q75 - q25;
                (q25 - multiplier * iqr, q75 + multiplier * iqr)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub metric_name: MetricName,
    pub observed: f64,
    pub band_low: f64,
    pub band_high: f64,
    pub flagged: bool,
}

impl Verdict {
    pub fn new(metric_name: MetricName, observed: f64, band_low: f64, band_high: f64) -> Self {
        Verdict {
            metric_name,
            observed,
            band_low,
            band_high,
            flagged: observed < band_low || observed > band_high,
        }
    }
}

/// Verdicts for an already computed report.
pub fn judge(report: &MetricReport, bands: &Bands, policy: FlagPolicy) -> Result<Vec<Verdict>> {
    [MetricName::Density, MetricName::Coverage]
        .into_iter()
        .map(|m| {
            let (low, high) = policy.limits(bands.get(m))?;
            Ok(Verdict::new(m, m.of(report), low, high))
        })
        .collect()
}

/// Whole-batch metrics plus one verdict per metric.
pub fn flag_batch(
    index: &ManifoldIndex,
    query: &PointSet,
    bands: &Bands,
    policy: FlagPolicy,
) -> Result<(MetricReport, Vec<Verdict>)> {
    // Validate the bands before paying for the metric computation.
    for m in [MetricName::Density, MetricName::Coverage] {
        policy.limits(bands.get(m))?;
    }
    let report = evaluate(index, query, false)?;
    let verdicts = judge(&report, bands, policy)?;
    Ok((report, verdicts))
}

pub fn any_flagged(verdicts: &[Verdict]) -> bool {
    verdicts.iter().any(|v| v.flagged)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmixturePoint {
    /// Requested adversarial fraction.
    pub fraction: f64,
    /// `n_adversarial / batch_size` after rounding.
    pub realized_fraction: f64,
    pub n_adversarial: usize,
    #[serde(flatten)]
    pub report: MetricReport,
}

/// For each fraction `f`, evaluates a batch of `batch_size` rows of which
/// `round(f · batch_size)` are adversarial. Rows are drawn without
/// replacement from a seeded permutation of each pool; every batch uses a
/// prefix of the same two permutations.
pub fn admixture_sweep(
    index: &ManifoldIndex,
    benign: &PointSet,
    adversarial: &PointSet,
    fractions: &[f64],
    batch_size: usize,
    seed: u64,
) -> Result<Vec<AdmixturePoint>> {
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    if benign.n() < batch_size || adversarial.n() < batch_size {
        return Err(Error::Size(format!(
            "batch size {batch_size} needs that many benign ({}) and adversarial ({}) rows",
            benign.n(),
            adversarial.n()
        )));
    }
    if let Some(f) = fractions.iter().find(|f| !(0.0..=1.0).contains(*f)) {
        return Err(Error::InvalidArgument(format!("fraction {f} outside [0, 1]")));
    }
    if fractions.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidArgument("fractions must be sorted ascending".into()));
    }
    let mut benign_order: Vec<usize> = (0..benign.n()).collect();
    benign_order.shuffle(&mut stream_rng(seed, STREAM_ADMIX_BENIGN));
    let mut adv_order: Vec<usize> = (0..adversarial.n()).collect();
    adv_order.shuffle(&mut stream_rng(seed, STREAM_ADMIX_ADVERSARIAL));

    fractions
        .par_iter()
        .map(|&fraction| {
            let n_adv = (fraction * batch_size as f64).round() as usize;
            let batch = admixture_batch(benign, adversarial, &benign_order, &adv_order, batch_size, n_adv)?;
            Ok(AdmixturePoint {
                fraction,
                realized_fraction: n_adv as f64 / batch_size as f64,
                n_adversarial: n_adv,
                report: evaluate(index, &batch, false)?,
            })
        })
        .collect()
}

fn admixture_batch(
    benign: &PointSet,
    adversarial: &PointSet,
    benign_order: &[usize],
    adv_order: &[usize],
    batch_size: usize,
    n_adv: usize,
) -> Result<PointSet> {
    let b = benign.select(&benign_order[..batch_size - n_adv]).without_labels();
    let a = adversarial.select(&adv_order[..n_adv]).without_labels();
    b.concat(&a)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizePoint {
    pub size: usize,
    #[serde(flatten)]
    pub report: MetricReport,
}

/// Metrics of nested random subsets: every size uses a prefix of one
/// seeded permutation of `query`, so coverage is non-decreasing in size.
pub fn batch_size_sweep(index: &ManifoldIndex, query: &PointSet, sizes: &[usize], seed: u64) -> Result<Vec<SizePoint>> {
    if let Some(&s) = sizes.iter().find(|&&s| s == 0 || s > query.n()) {
        return Err(Error::Size(format!(
            "batch size {s} outside 1..={}",
            query.n()
        )));
    }
    let mut order: Vec<usize> = (0..query.n()).collect();
    order.shuffle(&mut stream_rng(seed, STREAM_BATCH_SIZE));
    sizes
        .par_iter()
        .map(|&size| {
            Ok(SizePoint {
                size,
                report: evaluate(index, &query.select(&order[..size]), false)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::build_index;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_set(seed: u64, n: usize, d: usize) -> PointSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PointSet::new((0..n * d).map(|_| rng.random::<f32>()).collect(), d, None).unwrap()
    }

    #[test]
    fn linear_interpolation_quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.25), 1.75);
        assert_eq!(quantile_sorted(&v, 0.5), 2.5);
        assert_eq!(quantile_sorted(&v, 0.75), 3.25);
        assert_eq!(quantile_sorted(&[7.0], 0.3), 7.0);
    }

    #[test]
    fn ensemble_sizes_follow_floor() {
        let idx = build_index(random_set(1, 300, 4), 5).unwrap();
        let q = random_set(2, 2100, 4);
        let bands = subbatch_ensemble(&idx, &q, 100, 3).unwrap();
        assert_eq!(bands.density.values.len(), 21);
        let q = random_set(2, 250, 4);
        let bands = subbatch_ensemble(&idx, &q, 100, 3).unwrap();
        assert_eq!(bands.coverage.values.len(), 2);
        assert!(matches!(subbatch_ensemble(&idx, &q, 251, 0), Err(Error::Size(_))));
    }

    #[test]
    fn identical_sub_batches_collapse_band() {
        let idx = build_index(random_set(1, 100, 3), 2).unwrap();
        let point = random_set(9, 1, 3);
        let mut q = point.clone();
        for _ in 0..39 {
            q = q.concat(&point).unwrap();
        }
        let bands = subbatch_ensemble(&idx, &q, 10, 0).unwrap();
        for b in [&bands.density, &bands.coverage] {
            assert_eq!(b.q25(), b.q50());
            assert_eq!(b.q50(), b.q75());
        }
    }

    #[test]
    fn verdict_rule() {
        assert!(!Verdict::new(MetricName::Density, 1.0, 0.9, 1.1).flagged);
        assert!(Verdict::new(MetricName::Density, 1.2, 0.9, 1.1).flagged);
        assert!(Verdict::new(MetricName::Coverage, 0.1, 0.2, 0.3).flagged);
        assert!(!Verdict::new(MetricName::Coverage, 0.2, 0.2, 0.3).flagged);
    }

    #[test]
    fn policy_limits() {
        let band = BandEnsemble::new(MetricName::Density, vec![1.0, 2.0, 3.0, 4.0], 10, 0);
        assert_eq!(FlagPolicy::QuantileRange.limits(&band).unwrap(), (1.75, 3.25));
        assert_eq!(FlagPolicy::default().limits(&band).unwrap(), (1.75 - 2.25, 3.25 + 2.25));
        let mut missing = band.clone();
        missing.quantiles.remove("0.75");
        assert!(FlagPolicy::default().limits(&missing).is_err());
    }

    #[test]
    fn missing_quantile_rejected_by_flag_batch() {
        let idx = build_index(random_set(1, 200, 3), 3).unwrap();
        let q = random_set(2, 200, 3);
        let mut bands = subbatch_ensemble(&idx, &q, 50, 0).unwrap();
        bands.coverage.quantiles.remove("0.25");
        assert!(flag_batch(&idx, &q, &bands, FlagPolicy::default()).is_err());
    }

    #[test]
    fn admixture_endpoints_equal_pure_batches() {
        let idx = build_index(random_set(1, 400, 3), 5).unwrap();
        let benign = random_set(2, 150, 3);
        let adv = PointSet::new(
            random_set(3, 150, 3).data().iter().map(|v| v + 0.5).collect(),
            3,
            None,
        )
        .unwrap();
        let sweep = admixture_sweep(&idx, &benign, &adv, &[0.0, 0.5, 1.0], 100, 11).unwrap();
        let mut order: Vec<usize> = (0..150).collect();
        order.shuffle(&mut stream_rng(11, STREAM_ADMIX_BENIGN));
        let pure_benign = evaluate(&idx, &benign.select(&order[..100]), false).unwrap();
        assert_eq!(sweep[0].report, pure_benign);
        let mut order: Vec<usize> = (0..150).collect();
        order.shuffle(&mut stream_rng(11, STREAM_ADMIX_ADVERSARIAL));
        let pure_adv = evaluate(&idx, &adv.select(&order[..100]), false).unwrap();
        assert_eq!(sweep[2].report, pure_adv);
        assert_eq!(sweep[1].n_adversarial, 50);
    }

    #[test]
    fn admixture_density_is_count_weighted_mix() {
        let idx = build_index(random_set(1, 400, 3), 5).unwrap();
        let benign = random_set(2, 120, 3);
        let adv = random_set(3, 120, 3);
        let fractions = [0.0, 0.13, 0.25, 0.5, 0.77, 1.0];
        let sweep = admixture_sweep(&idx, &benign, &adv, &fractions, 100, 5).unwrap();
        let mut bo: Vec<usize> = (0..120).collect();
        bo.shuffle(&mut stream_rng(5, STREAM_ADMIX_BENIGN));
        let mut ao: Vec<usize> = (0..120).collect();
        ao.shuffle(&mut stream_rng(5, STREAM_ADMIX_ADVERSARIAL));
        for p in &sweep {
            let nb = 100 - p.n_adversarial;
            let mut expected = 0.0;
            if nb > 0 {
                expected += nb as f64 * crate::metrics::density(&idx, &benign.select(&bo[..nb])).unwrap();
            }
            if p.n_adversarial > 0 {
                expected += p.n_adversarial as f64
                    * crate::metrics::density(&idx, &adv.select(&ao[..p.n_adversarial])).unwrap();
            }
            assert!((p.report.density - expected / 100.0).abs() < 1e-12);
        }
    }

    #[test]
    fn admixture_argument_checks() {
        let idx = build_index(random_set(1, 50, 2), 2).unwrap();
        let a = random_set(2, 20, 2);
        assert!(matches!(admixture_sweep(&idx, &a, &a, &[0.0], 21, 0), Err(Error::Size(_))));
        assert!(admixture_sweep(&idx, &a, &a, &[0.5, 0.25], 10, 0).is_err());
        assert!(admixture_sweep(&idx, &a, &a, &[1.5], 10, 0).is_err());
    }

    #[test]
    fn batch_size_full_equals_full_batch_and_nests() {
        let idx = build_index(random_set(1, 300, 4), 5).unwrap();
        let q = random_set(2, 200, 4);
        let sizes = [1, 5, 20, 50, 120, 200];
        let sweep = batch_size_sweep(&idx, &q, &sizes, 4).unwrap();
        assert_eq!(sweep.last().unwrap().report, evaluate(&idx, &q, false).unwrap());
        for w in sweep.windows(2) {
            assert!(w[0].report.coverage <= w[1].report.coverage);
        }
        assert!(batch_size_sweep(&idx, &q, &[201], 0).is_err());
        assert!(batch_size_sweep(&idx, &q, &[0], 0).is_err());
    }

    #[test]
    fn deterministic_under_seed() {
        let idx = build_index(random_set(1, 300, 4), 5).unwrap();
        let q = random_set(2, 500, 4);
        assert_eq!(
            subbatch_ensemble(&idx, &q, 50, 8).unwrap(),
            subbatch_ensemble(&idx, &q, 50, 8).unwrap()
        );
        assert_eq!(
            batch_size_sweep(&idx, &q, &[10, 100], 8).unwrap(),
            batch_size_sweep(&idx, &q, &[10, 100], 8).unwrap()
        );
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]
        #[test]
        fn quartiles_are_ordered(seed in 0u64..10_000) {
            let idx = build_index(random_set(seed, 120, 3), 3).unwrap();
            let q = random_set(seed + 1, 300, 3);
            let bands = subbatch_ensemble(&idx, &q, 25, seed).unwrap();
            for b in [&bands.density, &bands.coverage] {
                proptest::prop_assert!(b.q25().unwrap() <= b.q50().unwrap());
                proptest::prop_assert!(b.q50().unwrap() <= b.q75().unwrap());
            }
        }
    }
}
