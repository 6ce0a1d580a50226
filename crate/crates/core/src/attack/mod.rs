//! Desk-scale attack simulator: synthetic blobs, a small classifier, FGSM and
//! boundary attacks, and the ε-sweep that ties them to the metrics.

mod boundary;
mod data;
mod fgsm;
mod model;
mod sweep;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use boundary::{boundary_attack, boundary_attack_batch, pick_starting_points, BoundaryOutcome};
pub use data::{make_blobs, BlobMixture, DEFAULT_BLOB_STD};
pub use fgsm::{fgsm, sign};
pub use model::{train_classifier, ClassifierModel, Layer, TrainConfig, Training};
pub use sweep::{epsilon_grid, epsilon_sweep, EpsilonPoint, EpsilonSweep, SweepOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    /// FGSM perturbation magnitude, in feature units.
    pub epsilon: f64,
    pub epsilon_grid: Vec<f64>,
    /// Boundary-attack proposals.
    pub steps: usize,
    /// Boundary-attack step length, in feature units.
    pub step_scale: f64,
    pub clip_range: Option<(f32, f32)>,
    pub seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            epsilon: 0.1,
            epsilon_grid: epsilon_grid(0.0, 1.0, 0.05).expect("valid default grid"),
            steps: 1000,
            step_scale: 0.01,
            clip_range: Some((0.0, 1.0)),
            seed: 0,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0) {
            return Err(Error::InvalidArgument(format!("epsilon {} < 0", self.epsilon)));
        }
        if self.epsilon_grid.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidArgument("epsilon grid must be sorted ascending".into()));
        }
        if !(self.step_scale > 0.0 && self.step_scale.is_finite()) {
            return Err(Error::InvalidArgument(format!("step scale must be positive, got {}", self.step_scale)));
        }
        if let Some((lo, hi)) = self.clip_range {
            if !(lo < hi) {
                return Err(Error::InvalidArgument(format!("clip range ({lo}, {hi}) is empty")));
            }
        }
        Ok(())
    }
}
