//! The reference manifold: a hypersphere around every reference point whose
//! radius is the distance to its k-th nearest other reference point, plus an
//! exact accelerated structure answering "which spheres contain this point?".
//!
//! Membership is strict: a point `q` lies in sphere `i` iff
//! `euclidean(q, r_i) < radii[i]`, with distances computed by
//! [`crate::distance::euclidean`]. Duplicate reference points therefore get a
//! radius of zero for `k = 1` and contain nothing.

mod blocked;
pub(crate) mod brute;
mod kdtree;

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::distance::sq_threshold;
use crate::error::{Error, Result};
use crate::io::{read_exact, read_f32_block, read_pset, write_pset};
use crate::pointset::PointSet;

use blocked::Blocked;
use kdtree::KdTree;

/// Which exact search structure backs the index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SearchStrategy {
    /// kd-tree up to [`KD_TREE_MAX_DIM`] dimensions, blocked kernel beyond.
    #[default]
    Auto,
    KdTree,
    Blocked,
}

/// Above this dimensionality box pruning stops paying off.
pub const KD_TREE_MAX_DIM: usize = 16;

impl SearchStrategy {
    fn resolve(self, d: usize) -> SearchStrategy {
        match self {
            SearchStrategy::Auto if d <= KD_TREE_MAX_DIM => SearchStrategy::KdTree,
            SearchStrategy::Auto => SearchStrategy::Blocked,
            s => s,
        }
    }
}

#[derive(Debug, Clone)]
enum Accelerator {
    KdTree(KdTree),
    Blocked(Blocked),
}

/// Per-query sphere counts and per-reference hit flags for one query batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Membership {
    /// `counts[j]` is the number of reference spheres containing query `j`.
    pub counts: Vec<u32>,
    /// `hits[i]` is true iff some query point lies in sphere `i`.
    pub hits: Vec<bool>,
}

/// Reference points, their k-NN radii and an exact search structure.
/// Immutable after construction and safe to query from many threads.
#[derive(Debug, Clone)]
pub struct ManifoldIndex {
    reference: PointSet,
    k: usize,
    radii: Vec<f32>,
    thresholds: Vec<f32>,
    strategy: SearchStrategy,
    accel: Accelerator,
}

pub fn build_index(reference: PointSet, k: usize) -> Result<ManifoldIndex> {
    ManifoldIndex::build(reference, k)
}

impl ManifoldIndex {
    pub fn build(reference: PointSet, k: usize) -> Result<Self> {
        Self::build_with(reference, k, SearchStrategy::Auto)
    }

    pub fn build_with(reference: PointSet, k: usize, strategy: SearchStrategy) -> Result<Self> {
        check_size(&reference, k)?;
        let strategy = strategy.resolve(reference.d());
        let (accel, kth) = match strategy {
            SearchStrategy::KdTree => {
                let tree = KdTree::build(&reference);
                let kth = tree.kth_sq_distances(&reference, k);
                (Accelerator::KdTree(tree), kth)
            }
            _ => {
                let blocked = Blocked::build(&reference);
                let kth = blocked.kth_sq_distances(&reference, k);
                (Accelerator::Blocked(blocked), kth)
            }
        };
        let radii = kth.iter().map(|s| s.sqrt()).collect();
        Ok(Self::assemble(reference, k, radii, strategy, accel))
    }

    /// Rebuilds an index from stored radii without recomputing neighbours.
    pub fn from_parts(reference: PointSet, k: usize, radii: Vec<f32>, strategy: SearchStrategy) -> Result<Self> {
        check_size(&reference, k)?;
        if radii.len() != reference.n() {
            return Err(Error::Validation(format!(
                "{} radii for {} reference points",
                radii.len(),
                reference.n()
            )));
        }
        if let Some(r) = radii.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
            return Err(Error::Validation(format!("invalid radius {r}")));
        }
        let strategy = strategy.resolve(reference.d());
        let accel = match strategy {
            SearchStrategy::KdTree => Accelerator::KdTree(KdTree::build(&reference)),
            _ => Accelerator::Blocked(Blocked::build(&reference)),
        };
        Ok(Self::assemble(reference, k, radii, strategy, accel))
    }

    fn assemble(reference: PointSet, k: usize, radii: Vec<f32>, strategy: SearchStrategy, mut accel: Accelerator) -> Self {
        let thresholds: Vec<f32> = radii.iter().map(|&r| sq_threshold(r)).collect();
        if let Accelerator::KdTree(tree) = &mut accel {
            tree.set_thresholds(&thresholds);
        }
        ManifoldIndex {
            reference,
            k,
            radii,
            thresholds,
            strategy,
            accel,
        }
    }

    pub fn reference(&self) -> &PointSet {
        &self.reference
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Radius of every reference sphere, in reference row order.
    pub fn radii(&self) -> &[f32] {
        &self.radii
    }

    /// The resolved strategy (never `Auto`).
    pub fn strategy(&self) -> SearchStrategy {
        self.strategy
    }

    pub fn n_reference(&self) -> usize {
        self.reference.n()
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        if d != self.reference.d() {
            return Err(Error::Dimension {
                expected: self.reference.d(),
                got: d,
            });
        }
        Ok(())
    }

    /// Number of reference spheres strictly containing `q`.
    pub fn count_containing_spheres(&self, q: &[f32]) -> Result<u32> {
        self.check_dim(q.len())?;
        match &self.accel {
            Accelerator::KdTree(tree) => Ok(tree.count_containing(q)),
            Accelerator::Blocked(_) => {
                let single = PointSet::new(q.to_vec(), q.len(), None)?;
                Ok(self.membership(&single)?.counts[0])
            }
        }
    }

    /// For every reference sphere, whether any query point lies inside it.
    pub fn spheres_hit(&self, query: &PointSet) -> Result<Vec<bool>> {
        Ok(self.membership(query)?.hits)
    }

    /// Sphere counts per query point and hit flags per sphere, in one pass.
    pub fn membership(&self, query: &PointSet) -> Result<Membership> {
        self.check_dim(query.d())?;
        Ok(match &self.accel {
            Accelerator::KdTree(tree) => tree.membership(self.reference.n(), query),
            Accelerator::Blocked(b) => b.membership(&self.reference, &self.thresholds, query),
        })
    }

    /// The same answer as [`membership`](Self::membership) from an exhaustive double loop.
    pub fn membership_brute_force(&self, query: &PointSet) -> Result<Membership> {
        self.check_dim(query.d())?;
        Ok(brute::membership(&self.reference, &self.thresholds, query))
    }
}

/// Radii from the exhaustive O(S²·d) loop, for cross-checking.
pub fn radii_brute_force(reference: &PointSet, k: usize) -> Result<Vec<f32>> {
    check_size(reference, k)?;
    Ok(brute::kth_sq_distances(reference, k)
        .into_iter()
        .map(f32::sqrt)
        .collect())
}

pub(crate) fn check_size(reference: &PointSet, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if reference.n() <= k {
        return Err(Error::Size(format!(
            "reference has {} points; k = {k} needs at least {}",
            reference.n(),
            k + 1
        )));
    }
    Ok(())
}

/// k-th smallest value (1-based) of `values`; reorders the slice.
pub(crate) fn kth_smallest(values: &mut [f32], k: usize) -> f32 {
    let (_, kth, _) = values.select_nth_unstable_by(k - 1, f32::total_cmp);
    *kth
}

pub const INDEX_MAGIC: [u8; 4] = *b"GIDX";
pub const INDEX_VERSION: u16 = 1;

/// Index file layout (little-endian):
/// `"GIDX"`, u16 version, u16 flags (0), u64 k, a complete PSET record for
/// the reference, u64 S, then S f32 radii.
pub fn write_index<W: Write>(index: &ManifoldIndex, w: &mut W) -> std::io::Result<()> {
    w.write_all(&INDEX_MAGIC)?;
    w.write_all(&INDEX_VERSION.to_le_bytes())?;
    w.write_all(&0u16.to_le_bytes())?;
    w.write_all(&(index.k as u64).to_le_bytes())?;
    write_pset(&index.reference, w)?;
    w.write_all(&(index.radii.len() as u64).to_le_bytes())?;
    for r in &index.radii {
        w.write_all(&r.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_index<R: Read>(r: &mut R, strategy: SearchStrategy) -> Result<ManifoldIndex> {
    let mut header = [0u8; 16];
    read_exact(r, &mut header, "index header")?;
    if header[0..4] != INDEX_MAGIC {
        return Err(Error::Format(format!("bad magic {:?}, expected \"GIDX\"", &header[0..4])));
    }
    let version = u16::from_le_bytes([header[4], header[5]]);
    if version != INDEX_VERSION {
        return Err(Error::Format(format!("unsupported index version {version}")));
    }
    let flags = u16::from_le_bytes([header[6], header[7]]);
    if flags != 0 {
        return Err(Error::Format(format!("unknown index flags {flags:#06x}")));
    }
    let k = u64::from_le_bytes(header[8..16].try_into().unwrap()) as usize;
    let reference = read_pset(r)?;
    let mut count = [0u8; 8];
    read_exact(r, &mut count, "radius count")?;
    let s = u64::from_le_bytes(count);
    if s != reference.n() as u64 {
        return Err(Error::Format(format!(
            "radius block has {s} entries for {} reference points",
            reference.n()
        )));
    }
    let radii = read_f32_block(r, s * 4, "radii")?;
    ManifoldIndex::from_parts(reference, k, radii, strategy)
}

pub fn save_index(index: &ManifoldIndex, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_index(index, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn load_index(path: impl AsRef<Path>, strategy: SearchStrategy) -> Result<ManifoldIndex> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let index = read_index(&mut r, strategy).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })?;
    let mut rest = [0u8; 1];
    match r.read(&mut rest) {
        Ok(0) => Ok(index),
        Ok(_) => Err(Error::Format(format!("{}: trailing bytes after index", path.display()))),
        Err(e) => Err(Error::io(path, e)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(values: &[f32]) -> PointSet {
        PointSet::new(values.to_vec(), 1, None).unwrap()
    }

    const STRATEGIES: [SearchStrategy; 2] = [SearchStrategy::KdTree, SearchStrategy::Blocked];

    #[test]
    fn radii_of_small_line() {
        for s in STRATEGIES {
            let idx = ManifoldIndex::build_with(line(&[0.0, 1.0, 3.0]), 1, s).unwrap();
            assert_eq!(idx.radii(), &[1.0, 1.0, 2.0]);
            let idx = ManifoldIndex::build_with(line(&[0.0, 1.0, 3.0]), 2, s).unwrap();
            assert_eq!(idx.radii(), &[3.0, 2.0, 3.0]);
        }
    }

    #[test]
    fn duplicates_have_zero_radius() {
        for s in STRATEGIES {
            let idx = ManifoldIndex::build_with(line(&[0.0, 0.0, 5.0, 5.0, 9.0]), 1, s).unwrap();
            assert_eq!(&idx.radii()[..4], &[0.0; 4]);
            // A zero-radius sphere contains nothing, not even its centre.
            assert_eq!(idx.count_containing_spheres(&[0.0]).unwrap(), 0);
        }
    }

    #[test]
    fn counts_on_small_line() {
        for s in STRATEGIES {
            let idx = ManifoldIndex::build_with(line(&[0.0, 1.0, 3.0]), 1, s).unwrap();
            assert_eq!(idx.count_containing_spheres(&[0.5]).unwrap(), 2);
            assert_eq!(idx.count_containing_spheres(&[1e6]).unwrap(), 0);
            assert!(idx.count_containing_spheres(&[0.0]).unwrap() >= 1);
            assert_eq!(idx.spheres_hit(&line(&[0.5])).unwrap(), vec![true, true, false]);
            assert_eq!(idx.spheres_hit(&PointSet::empty(1).unwrap()).unwrap(), vec![false; 3]);
            assert_eq!(idx.spheres_hit(&line(&[0.0, 1.0, 3.0])).unwrap(), vec![true; 3]);
        }
    }

    #[test]
    fn size_and_dimension_errors() {
        assert!(matches!(build_index(line(&[0.0, 1.0]), 2), Err(Error::Size(_))));
        assert!(matches!(build_index(line(&[0.0, 1.0]), 0), Err(Error::InvalidArgument(_))));
        let idx = build_index(line(&[0.0, 1.0, 3.0]), 1).unwrap();
        assert!(matches!(
            idx.count_containing_spheres(&[0.0, 0.0]),
            Err(Error::Dimension { expected: 1, got: 2 })
        ));
    }

    #[test]
    fn auto_picks_by_dimension() {
        let low = build_index(PointSet::new(vec![0.0; 8 * 3], 3, None).unwrap(), 1).unwrap();
        assert_eq!(low.strategy(), SearchStrategy::KdTree);
        let high = build_index(PointSet::new(vec![0.0; 8 * 64], 64, None).unwrap(), 1).unwrap();
        assert_eq!(high.strategy(), SearchStrategy::Blocked);
    }

    #[test]
    fn index_file_round_trip() {
        let idx = build_index(line(&[0.0, 1.0, 3.0, 7.5]), 2).unwrap();
        let mut bytes = Vec::new();
        write_index(&idx, &mut bytes).unwrap();
        let back = read_index(&mut &bytes[..], SearchStrategy::Auto).unwrap();
        assert_eq!(back.radii(), idx.radii());
        assert_eq!(back.k(), 2);
        assert_eq!(back.reference(), idx.reference());
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(read_index(&mut &bad[..], SearchStrategy::Auto), Err(Error::Format(_))));
    }
}
