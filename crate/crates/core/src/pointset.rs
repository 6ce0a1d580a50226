//! Row-major matrices of `f32` feature vectors with optional class labels.

use crate::error::{Error, Result};

/// An `n × d` matrix of finite `f32` values, optionally labelled per row.
///
/// Point sets are immutable once built; every constructor validates the
/// invariants (finite values, `d ≥ 1`, one label per row).
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    data: Vec<f32>,
    labels: Option<Vec<u32>>,
    n: usize,
    d: usize,
}

impl PointSet {
    pub fn new(data: Vec<f32>, d: usize, labels: Option<Vec<u32>>) -> Result<Self> {
        if d == 0 {
            return Err(Error::Validation("dimensionality must be at least 1".into()));
        }
        if !data.len().is_multiple_of(d) {
            return Err(Error::Validation(format!(
                "data length {} is not a multiple of d = {d}",
                data.len()
            )));
        }
        let n = data.len() / d;
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite value {} at row {}, column {}",
                data[pos],
                pos / d,
                pos % d
            )));
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::Validation(format!(
                    "{} labels for {n} rows",
                    l.len()
                )));
            }
        }
        Ok(PointSet { data, labels, n, d })
    }

    /// Builds a point set from a slice of equal-length rows.
    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R], labels: Option<Vec<u32>>) -> Result<Self> {
        let d = rows.first().map(|r| r.as_ref().len()).ok_or_else(|| {
            Error::Validation("cannot infer dimensionality from zero rows".into())
        })?;
        let mut data = Vec::with_capacity(rows.len() * d);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != d {
                return Err(Error::Validation(format!(
                    "row {i} has {} columns, expected {d}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(data, d, labels)
    }

    pub fn empty(d: usize) -> Result<Self> {
        Self::new(Vec::new(), d, None)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn labels(&self) -> Option<&[u32]> {
        self.labels.as_deref()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f32> {
        self.data.chunks_exact(self.d)
    }

    /// Drops the labels, keeping the feature matrix.
    pub fn without_labels(&self) -> PointSet {
        PointSet {
            data: self.data.clone(),
            labels: None,
            n: self.n,
            d: self.d,
        }
    }

    /// Replaces the labels. Fails if the count does not match `n`.
    pub fn with_labels(self, labels: Option<Vec<u32>>) -> Result<PointSet> {
        Self::new(self.data, self.d, labels)
    }

    /// Copies the listed rows (in the given order) into a new point set.
    /// Panics if an index is out of range.
    pub fn select(&self, indices: &[usize]) -> PointSet {
        let mut data = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        let labels = self
            .labels
            .as_ref()
            .map(|l| indices.iter().map(|&i| l[i]).collect());
        PointSet {
            data,
            labels,
            n: indices.len(),
            d: self.d,
        }
    }

    /// Stacks `other` below `self`. Labels survive only if both sides carry them.
    pub fn concat(&self, other: &PointSet) -> Result<PointSet> {
        if other.d != self.d {
            return Err(Error::Dimension {
                expected: self.d,
                got: other.d,
            });
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        let labels = match (&self.labels, &other.labels) {
            (Some(a), Some(b)) => Some(a.iter().chain(b).copied().collect()),
            _ => None,
        };
        Ok(PointSet {
            data,
            labels,
            n: self.n + other.n,
            d: self.d,
        })
    }

    pub(crate) fn require_labels(&self, what: &str) -> Result<&[u32]> {
        self.labels()
            .ok_or_else(|| Error::Validation(format!("{what} requires labelled points")))
    }
}

/// Flattens an `n × H × W × C` image tensor (row-major, channel-last) into a
/// point set with `d = H·W·C`. Values are copied verbatim, no rescaling.
pub fn flatten_images(data: &[f32], shape: [usize; 4]) -> Result<PointSet> {
    let [n, h, w, c] = shape;
    let d = h * w * c;
    if data.len() != n * d {
        return Err(Error::Validation(format!(
            "tensor of shape {shape:?} needs {} values, got {}",
            n * d,
            data.len()
        )));
    }
    PointSet::new(data.to_vec(), d, None)
}
