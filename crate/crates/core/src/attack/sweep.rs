//! Metrics of FGSM batches over a grid of perturbation magnitudes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::ManifoldIndex;
use crate::metrics::{evaluate, MetricReport};
use crate::monitor::{subbatch_ensemble, Bands};
use crate::pointset::PointSet;

use super::fgsm::fgsm;
use super::model::ClassifierModel;

/// `start, start + step, ..., stop` (inclusive), with values rounded to 12
/// decimals so that `0:1:0.05` yields exactly 21 tidy points.
pub fn epsilon_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(start >= 0.0) || !(stop >= start) {
        return Err(Error::InvalidArgument(format!(
            "bad epsilon grid {start}:{stop}:{step}"
        )));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count)
        .map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub clip_range: Option<(f32, f32)>,
    /// When set, quantile bands are computed for the clean batch and for every ε.
    pub sub_batch_size: Option<usize>,
    pub seed: u64,
    /// Keep each adversarial batch in the result (not serialised).
    pub keep_adversarial: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            clip_range: Some((0.0, 1.0)),
            sub_batch_size: None,
            seed: 0,
            keep_adversarial: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonPoint {
    pub epsilon: f64,
    pub report: MetricReport,
    /// Model accuracy on the attacked batch.
    pub accuracy: f64,
    /// Mean Euclidean norm of `x_adv − x` over the batch.
    pub mean_perturbation_norm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bands: Option<Bands>,
    #[serde(skip)]
    pub adversarial: Option<PointSet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSweep {
    /// Clean validation batch against the index; does not depend on ε.
    pub reference: MetricReport,
    pub reference_accuracy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_bands: Option<Bands>,
    pub points: Vec<EpsilonPoint>,
}

pub fn epsilon_sweep(
    model: &ClassifierModel,
    validation: &PointSet,
    index: &ManifoldIndex,
    grid: &[f64],
    options: &SweepOptions,
) -> Result<EpsilonSweep> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("epsilon grid is empty".into()));
    }
    model.check_input(validation)?;
    let clean = validation.without_labels();
    let bands_for = |batch: &PointSet| -> Result<Option<Bands>> {
        options
            .sub_batch_size
            .map(|b| subbatch_ensemble(index, batch, b, options.seed))
            .transpose()
    };
    let reference = evaluate(index, &clean, false)?;
    let reference_bands = bands_for(&clean)?;
    let reference_accuracy = model.accuracy(validation)?;

    let mut points = Vec::with_capacity(grid.len());
    for &epsilon in grid {
        let adv = fgsm(model, validation, epsilon, options.clip_range)?;
        let unlabelled = adv.without_labels();
        let mean_perturbation_norm = adv
            .rows()
            .zip(validation.rows())
            .map(|(a, x)| {
                a.iter()
                    .zip(x)
                    .map(|(&p, &q)| (p as f64 - q as f64).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .sum::<f64>()
            / validation.n().max(1) as f64;
        points.push(EpsilonPoint {
            epsilon,
            report: evaluate(index, &unlabelled, false)?,
            accuracy: model.accuracy(&adv)?,
            mean_perturbation_norm,
            bands: bands_for(&unlabelled)?,
            adversarial: options.keep_adversarial.then_some(adv),
        });
    }
    Ok(EpsilonSweep {
        reference,
        reference_accuracy,
        reference_bands,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::data::make_blobs;
    use crate::attack::model::{train_classifier, TrainConfig};
    use crate::index::build_index;
    use crate::split::{split_stratified, SplitSpec};

    #[test]
    fn grid_has_21_points() {
        let g = epsilon_grid(0.0, 1.0, 0.05).unwrap();
        assert_eq!(g.len(), 21);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[6], 0.3);
        assert_eq!(g[20], 1.0);
        assert!(epsilon_grid(0.0, 1.0, 0.0).is_err());
        assert_eq!(epsilon_grid(0.2, 0.2, 0.1).unwrap(), vec![0.2]);
    }

    #[test]
    fn zero_epsilon_matches_reference_and_accuracy_falls() {
        let data = make_blobs(1500, 6, 3, 8.0, 1).unwrap();
        let (model_set, validation) = split_stratified(&data, &SplitSpec::new(0.2, 1, true).unwrap()).unwrap();
        let model = train_classifier(&model_set, &TrainConfig::default()).unwrap().model;
        let index = build_index(model_set.without_labels(), 5).unwrap();
        let grid = epsilon_grid(0.0, 0.4, 0.05).unwrap();
        let options = SweepOptions { sub_batch_size: Some(100), ..Default::default() };
        let sweep = epsilon_sweep(&model, &validation, &index, &grid, &options).unwrap();
        assert_eq!(sweep.points.len(), grid.len());
        assert_eq!(sweep.points[0].report, sweep.reference);
        assert_eq!(sweep.points[0].bands, sweep.reference_bands);
        assert_eq!(sweep.points[0].mean_perturbation_norm, 0.0);
        for w in sweep.points.windows(2) {
            assert!(w[1].accuracy <= w[0].accuracy + 0.02);
        }
        assert!(epsilon_sweep(&model, &validation, &index, &[], &options).is_err());
    }
}
