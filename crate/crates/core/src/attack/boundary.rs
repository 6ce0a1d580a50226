//! Decision-based boundary attack: a rejection-sampling walk that starts
//! from a misclassified point and moves toward the source while staying
//! misclassified. Only predicted labels are queried.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::pointset::PointSet;
use crate::rng::{derive_seed, stream_rng, STREAM_BOUNDARY};

use super::model::ClassifierModel;
use super::AttackConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryOutcome {
    /// Final iterate; always misclassified.
    pub adversarial: Vec<f32>,
    /// Euclidean distance to the source of the start point and of every accepted iterate.
    pub accepted_distances: Vec<f64>,
    pub proposals: usize,
}

fn distance(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Runs `config.steps` proposals. Each proposal adds a Gaussian step of
/// expected length `step_scale`, then moves `step_scale` toward the source
/// (clipped to `clip_range` when set). A proposal is accepted iff the model
/// still misclassifies it and it is no farther from the source.
pub fn boundary_attack(
    model: &ClassifierModel,
    source: &[f32],
    true_label: u32,
    start: &[f32],
    config: &AttackConfig,
) -> Result<BoundaryOutcome> {
    config.validate()?;
    let d = model.input_dim;
    if source.len() != d || start.len() != d {
        return Err(Error::Dimension {
            expected: d,
            got: if source.len() != d { source.len() } else { start.len() },
        });
    }
    if model.predict(start) == true_label {
        return Err(Error::InvalidArgument(
            "boundary attack start point is classified as the true label".into(),
        ));
    }
    let mut rng = stream_rng(config.seed, STREAM_BOUNDARY);
    let scale = config.step_scale;
    let mut current = start.to_vec();
    let mut current_dist = distance(&current, source);
    let mut accepted_distances = vec![current_dist];
    let mut candidate = vec![0f32; d];
    for _ in 0..config.steps {
        for (c, &v) in candidate.iter_mut().zip(&current) {
            let z: f64 = StandardNormal.sample(&mut rng);
            *c = (v as f64 + scale * z / (d as f64).sqrt()) as f32;
        }
        let gap = distance(&candidate, source);
        if gap > 0.0 {
            let t = (scale / gap).min(1.0);
            for (c, &s) in candidate.iter_mut().zip(source) {
                *c = (*c as f64 + t * (s as f64 - *c as f64)) as f32;
            }
        }
        if let Some((lo, hi)) = config.clip_range {
            for c in candidate.iter_mut() {
                *c = c.clamp(lo, hi);
            }
        }
        let cand_dist = distance(&candidate, source);
        if cand_dist <= current_dist && model.predict(&candidate) != true_label {
            current.copy_from_slice(&candidate);
            current_dist = cand_dist;
            accepted_distances.push(cand_dist);
        }
    }
    Ok(BoundaryOutcome {
        adversarial: current,
        accepted_distances,
        proposals: config.steps,
    })
}

/// Attacks every labelled row of `sources`, starting from the matching row
/// of `starts`. Sample `i` uses a seed derived from `(config.seed, i)`.
pub fn boundary_attack_batch(
    model: &ClassifierModel,
    sources: &PointSet,
    starts: &PointSet,
    config: &AttackConfig,
) -> Result<(PointSet, Vec<BoundaryOutcome>)> {
    model.check_input(sources)?;
    model.check_input(starts)?;
    let labels = sources.require_labels("boundary attack")?;
    if starts.n() != sources.n() {
        return Err(Error::Validation(format!(
            "{} start points for {} sources",
            starts.n(),
            sources.n()
        )));
    }
    let outcomes: Vec<BoundaryOutcome> = (0..sources.n())
        .into_par_iter()
        .map(|i| {
            let cfg = AttackConfig {
                seed: derive_seed(config.seed, i as u64),
                ..config.clone()
            };
            boundary_attack(model, sources.row(i), labels[i], starts.row(i), &cfg)
        })
        .collect::<Result<_>>()?;
    let data = outcomes.iter().flat_map(|o| o.adversarial.iter().copied()).collect();
    let adv = PointSet::new(data, sources.d(), Some(labels.to_vec()))?;
    Ok((adv, outcomes))
}

/// For each source row, a random row of `pool` that the model assigns to a
/// class other than the source's true label.
pub fn pick_starting_points(model: &ClassifierModel, pool: &PointSet, sources: &PointSet, seed: u64) -> Result<PointSet> {
    use rand::Rng;
    model.check_input(pool)?;
    let labels = sources.require_labels("boundary attack")?;
    let predicted: Vec<u32> = pool.rows().map(|x| model.predict(x)).collect();
    let mut rng = stream_rng(seed, STREAM_BOUNDARY + 100);
    let mut chosen = Vec::with_capacity(sources.n());
    for &y in labels {
        let options: Vec<usize> = (0..pool.n()).filter(|&j| predicted[j] != y).collect();
        if options.is_empty() {
            return Err(Error::Validation(format!(
                "no pool point is classified outside class {y}"
            )));
        }
        chosen.push(options[rng.random_range(0..options.len())]);
    }
    Ok(pool.select(&chosen).without_labels())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::data::make_blobs;
    use crate::attack::model::{train_classifier, TrainConfig};

    fn setup() -> (ClassifierModel, PointSet) {
        let data = make_blobs(300, 5, 3, 8.0, 5).unwrap();
        let model = train_classifier(&data, &TrainConfig::default()).unwrap().model;
        (model, data)
    }

    fn config(steps: usize) -> AttackConfig {
        AttackConfig {
            steps,
            step_scale: 0.02,
            clip_range: Some((0.0, 1.0)),
            ..AttackConfig::default()
        }
    }

    #[test]
    fn zero_steps_returns_start() {
        let (model, data) = setup();
        let y = data.labels().unwrap()[0];
        let start = (0..data.n()).find(|&j| model.predict(data.row(j)) != y).unwrap();
        let out = boundary_attack(&model, data.row(0), y, data.row(start), &config(0)).unwrap();
        assert_eq!(out.adversarial, data.row(start));
    }

    #[test]
    fn rejects_non_adversarial_start() {
        let (model, data) = setup();
        let y = model.predict(data.row(0));
        assert!(boundary_attack(&model, data.row(0), y, data.row(0), &config(10)).is_err());
    }

    #[test]
    fn walk_stays_adversarial_and_approaches() {
        let (model, data) = setup();
        let sources = data.select(&(0..20).collect::<Vec<_>>());
        let starts = pick_starting_points(&model, &data, &sources, 3).unwrap();
        let (adv, outcomes) = boundary_attack_batch(&model, &sources, &starts, &config(300)).unwrap();
        for (i, o) in outcomes.iter().enumerate() {
            assert_ne!(model.predict(adv.row(i)), sources.labels().unwrap()[i]);
            assert!(o.accepted_distances.windows(2).all(|w| w[1] <= w[0]));
            assert!(o.accepted_distances.len() > 1, "sample {i} never moved");
        }
        let again = boundary_attack_batch(&model, &sources, &starts, &config(300)).unwrap().0;
        assert_eq!(adv, again);
    }
}
