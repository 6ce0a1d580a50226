//! Batch-level detection of adversarial or distribution-shifted samples.
//!
//! A [`ManifoldIndex`] over a reference set defines one hypersphere per
//! reference point (radius = distance to its k-th nearest neighbour). A query
//! batch is then summarised by its [`density`](metrics::density) and
//! [`coverage`](metrics::coverage) against that manifold; batches whose
//! metrics fall outside bands estimated from clean hold-out data are flagged
//! by the [`monitor`].
//!
//! The [`attack`] module provides synthetic data, a small classifier and
//! FGSM / boundary attacks for producing adversarial batches to test with.

pub mod attack;
pub mod bench;
pub mod distance;
pub mod error;
pub mod index;
pub mod io;
pub mod metrics;
pub mod monitor;
pub mod pointset;
mod rng;
pub mod split;

pub use error::{Error, Result};
pub use index::{build_index, ManifoldIndex, Membership, SearchStrategy};
pub use io::{load_pointset, save_pointset, Format};
pub use metrics::{coverage, density, evaluate, metrics_brute_force, MetricReport};
pub use pointset::{flatten_images, PointSet};
pub use split::{split_stratified, SplitSpec};
