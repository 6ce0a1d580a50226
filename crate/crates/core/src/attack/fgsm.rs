//! Fast gradient sign method: one step of size `ε` along the sign of the
//! input gradient of the negative log-likelihood.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::pointset::PointSet;

use super::model::ClassifierModel;

/// `sign` with `sign(0) = 0`, so coordinates with zero gradient stay put.
pub fn sign(v: f64) -> f32 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Perturbs every labelled row of `x` to `x + ε · sign(∇ₓJ(θ, x, y))`, then
/// clips to `clip` when given. Labels are carried over unchanged.
pub fn fgsm(model: &ClassifierModel, x: &PointSet, epsilon: f64, clip: Option<(f32, f32)>) -> Result<PointSet> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidArgument(format!("epsilon must be finite and ≥ 0, got {epsilon}")));
    }
    if let Some((lo, hi)) = clip {
        if !(lo < hi) {
            return Err(Error::InvalidArgument(format!("clip range ({lo}, {hi}) is empty")));
        }
    }
    model.check_input(x)?;
    let labels = x.require_labels("FGSM")?;
    let eps = epsilon as f32;
    let data: Vec<f32> = x
        .data()
        .par_chunks(x.d())
        .zip(labels.par_iter())
        .flat_map_iter(|(row, &y)| {
            let grad = model.input_gradient(row, y);
            row.iter()
                .zip(grad)
                .map(|(&v, g)| {
                    let moved = v + eps * sign(g);
                    match clip {
                        Some((lo, hi)) => moved.clamp(lo, hi),
                        None => moved,
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect();
    PointSet::new(data, x.d(), Some(labels.to_vec()))
}
