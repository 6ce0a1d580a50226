//! Seeded hold-out splitting, optionally stratified by class label.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::pointset::PointSet;
use crate::rng::{stream_rng, STREAM_SPLIT};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    /// Fraction of each class that goes to the hold-out side, in (0, 1).
    pub holdout_fraction: f64,
    pub seed: u64,
    pub stratified: bool,
}

impl SplitSpec {
    pub fn new(holdout_fraction: f64, seed: u64, stratified: bool) -> Result<Self> {
        if !(holdout_fraction > 0.0 && holdout_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "holdout fraction must lie strictly between 0 and 1, got {holdout_fraction}"
            )));
        }
        Ok(SplitSpec {
            holdout_fraction,
            seed,
            stratified,
        })
    }
}

/// Row indices of the model and hold-out sides, each in ascending order.
pub fn split_indices(ps: &PointSet, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    SplitSpec::new(spec.holdout_fraction, spec.seed, spec.stratified)?;
    let groups: Vec<Vec<usize>> = if spec.stratified {
        let labels = ps.require_labels("stratified split")?;
        let mut by_class: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, &l) in labels.iter().enumerate() {
            by_class.entry(l).or_default().push(i);
        }
        if let Some((class, members)) = by_class.iter().find(|(_, m)| m.len() < 2) {
            return Err(Error::Size(format!(
                "class {class} has {} member(s); stratified split needs at least 2",
                members.len()
            )));
        }
        by_class.into_values().collect()
    } else {
        if ps.n() < 2 {
            return Err(Error::Size(format!("cannot split {} point(s)", ps.n())));
        }
        vec![(0..ps.n()).collect()]
    };

    let mut rng = stream_rng(spec.seed, STREAM_SPLIT);
    let mut model = Vec::with_capacity(ps.n());
    let mut holdout = Vec::new();
    for mut group in groups {
        let size = group.len();
        let take = ((spec.holdout_fraction * size as f64).round() as usize).clamp(1, size - 1);
        group.shuffle(&mut rng);
        holdout.extend_from_slice(&group[..take]);
        model.extend_from_slice(&group[take..]);
    }
    model.sort_unstable();
    holdout.sort_unstable();
    Ok((model, holdout))
}

/// Splits `ps` into `(model, holdout)` point sets, preserving row order within each.
pub fn split_stratified(ps: &PointSet, spec: &SplitSpec) -> Result<(PointSet, PointSet)> {
    let (model, holdout) = split_indices(ps, spec)?;
    Ok((ps.select(&model), ps.select(&holdout)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labelled(counts: &[usize]) -> PointSet {
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for (c, &n) in counts.iter().enumerate() {
            for i in 0..n {
                data.push(i as f32);
                labels.push(c as u32);
            }
        }
        PointSet::new(data, 1, Some(labels)).unwrap()
    }

    #[test]
    fn mnist_sized_split() {
        let ps = labelled(&[7000; 10]);
        let spec = SplitSpec::new(0.03, 0, true).unwrap();
        let (m, h) = split_stratified(&ps, &spec).unwrap();
        assert_eq!((m.n(), h.n()), (67900, 2100));
    }

    #[test]
    fn single_class_half_split() {
        let ps = labelled(&[10]);
        let (m, h) = split_stratified(&ps, &SplitSpec::new(0.5, 9, true).unwrap()).unwrap();
        assert_eq!((m.n(), h.n()), (5, 5));
    }

    #[test]
    fn deterministic_for_seed() {
        let ps = labelled(&[13, 29, 7]);
        let spec = SplitSpec::new(0.3, 42, true).unwrap();
        assert_eq!(split_indices(&ps, &spec).unwrap(), split_indices(&ps, &spec).unwrap());
        let other = SplitSpec { seed: 43, ..spec };
        assert_ne!(split_indices(&ps, &spec).unwrap(), split_indices(&ps, &other).unwrap());
    }

    #[test]
    fn rejects_bad_inputs() {
        let ps = labelled(&[5, 1]);
        let spec = SplitSpec::new(0.5, 0, true).unwrap();
        assert!(matches!(split_indices(&ps, &spec), Err(Error::Size(_))));
        let unlabelled = ps.without_labels();
        assert!(matches!(split_indices(&unlabelled, &spec), Err(Error::Validation(_))));
        assert!(SplitSpec::new(1.0, 0, false).is_err());
        assert!(SplitSpec::new(0.0, 0, false).is_err());
    }

    #[test]
    fn unstratified_split_ignores_labels() {
        let ps = labelled(&[1, 1, 8]).without_labels();
        let (m, h) = split_indices(&ps, &SplitSpec::new(0.2, 1, false).unwrap()).unwrap();
        assert_eq!((m.len(), h.len()), (8, 2));
    }

    proptest::proptest! {
        #[test]
        fn partitions_and_respects_fraction(
            counts in proptest::collection::vec(2usize..40, 1..6),
            frac in 0.05f64..0.95,
            seed in 0u64..1000,
        ) {
            let ps = labelled(&counts);
            let spec = SplitSpec::new(frac, seed, true).unwrap();
            let (m, h) = split_indices(&ps, &spec).unwrap();
            let mut all: Vec<usize> = m.iter().chain(&h).copied().collect();
            all.sort_unstable();
            proptest::prop_assert_eq!(all, (0..ps.n()).collect::<Vec<_>>());
            let labels = ps.labels().unwrap();
            for (c, &size) in counts.iter().enumerate() {
                let in_holdout = h.iter().filter(|&&i| labels[i] == c as u32).count() as f64;
                proptest::prop_assert!((in_holdout - frac * size as f64).abs() <= 1.0);
            }
        }
    }
}
