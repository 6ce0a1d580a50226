//! Structural properties of the index, the metrics and the monitor.

use geomguard::attack::{make_blobs, BlobMixture, DEFAULT_BLOB_STD};
use geomguard::monitor::{any_flagged, judge, subbatch_ensemble, FlagPolicy};
use geomguard::{build_index, evaluate, ManifoldIndex, PointSet};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Small integer coordinates keep every distance exact in f32, so exact
/// symmetries must map results onto each other bit for bit.
fn integer_set(rng: &mut ChaCha8Rng, n: usize, d: usize) -> PointSet {
    let data = (0..n * d).map(|_| rng.random_range(-20i32..=20) as f32).collect();
    PointSet::new(data, d, None).unwrap()
}

fn map_rows(ps: &PointSet, f: impl Fn(&[f32]) -> Vec<f32>) -> PointSet {
    let rows: Vec<Vec<f32>> = ps.rows().map(f).collect();
    PointSet::from_rows(&rows, None).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn radii_grow_with_k(seed in 0u64..1000, d in 1usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let reference = integer_set(&mut rng, 60, d);
        let mut previous: Option<Vec<f32>> = None;
        for k in 1..=8 {
            let radii = build_index(reference.clone(), k).unwrap().radii().to_vec();
            if let Some(prev) = &previous {
                prop_assert!(prev.iter().zip(&radii).all(|(a, b)| a <= b));
            }
            previous = Some(radii);
        }
    }

    #[test]
    fn permuting_rows_permutes_radii_and_keeps_metrics(seed in 0u64..1000, d in 1usize..24) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let reference = integer_set(&mut rng, 80, d);
        let query = integer_set(&mut rng, 30, d);
        let mut order: Vec<usize> = (0..reference.n()).collect();
        order.shuffle(&mut rng);
        let a = build_index(reference.clone(), 3).unwrap();
        let b = build_index(reference.select(&order), 3).unwrap();
        for (j, &i) in order.iter().enumerate() {
            prop_assert_eq!(b.radii()[j], a.radii()[i]);
        }
        let mut q_order: Vec<usize> = (0..query.n()).collect();
        q_order.shuffle(&mut rng);
        prop_assert_eq!(
            evaluate(&a, &query, false).unwrap(),
            evaluate(&b, &query.select(&q_order), false).unwrap()
        );
    }

    #[test]
    fn rigid_motions_preserve_metrics(seed in 0u64..1000, d in 1usize..24) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let reference = integer_set(&mut rng, 70, d);
        let query = integer_set(&mut rng, 40, d);
        let shift: Vec<f32> = (0..d).map(|_| rng.random_range(-50i32..=50) as f32).collect();
        let mut axes: Vec<usize> = (0..d).collect();
        axes.shuffle(&mut rng);
        let signs: Vec<f32> = (0..d).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
        // Axis permutation with reflections, then translation: an exact isometry.
        let motion = |r: &[f32]| -> Vec<f32> { (0..d).map(|i| signs[i] * r[axes[i]] + shift[i]).collect() };

        let before = evaluate(&build_index(reference.clone(), 4).unwrap(), &query, false).unwrap();
        let moved = build_index(map_rows(&reference, motion), 4).unwrap();
        let after = evaluate(&moved, &map_rows(&query, motion), false).unwrap();
        prop_assert_eq!(before, after);
    }

    #[test]
    fn union_of_queries(seed in 0u64..1000, d in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let idx = build_index(integer_set(&mut rng, 60, d), 2).unwrap();
        let a = integer_set(&mut rng, 25, d);
        let b = integer_set(&mut rng, 15, d);
        let ab = a.concat(&b).unwrap();
        let (ra, rb, rab) = (
            evaluate(&idx, &a, false).unwrap(),
            evaluate(&idx, &b, false).unwrap(),
            evaluate(&idx, &ab, false).unwrap(),
        );
        prop_assert!(rab.coverage >= ra.coverage.max(rb.coverage));
        prop_assert!(rab.coverage <= ra.coverage + rb.coverage + 1e-12);
        let weighted = (ra.density * 25.0 + rb.density * 15.0) / 40.0;
        prop_assert!((rab.density - weighted).abs() < 1e-12);
    }
}

#[test]
fn iid_draws_have_density_near_one() {
    for seed in 0..5u64 {
        let mix = BlobMixture::new(8, 4, 6.0, DEFAULT_BLOB_STD, seed).unwrap();
        let idx = build_index(mix.sample(2000, 1).unwrap().without_labels(), 5).unwrap();
        let report = evaluate(&idx, &mix.sample(1000, 2).unwrap().without_labels(), false).unwrap();
        assert!((0.8..=1.2).contains(&report.density), "seed {seed}: {}", report.density);
        assert!(report.coverage > 0.5, "seed {seed}: {}", report.coverage);
    }
}

#[test]
fn benign_batches_are_rarely_flagged() {
    let mix = BlobMixture::new(8, 5, 6.0, DEFAULT_BLOB_STD, 11).unwrap();
    let idx = build_index(mix.sample(3000, 1).unwrap().without_labels(), 5).unwrap();
    let holdout = mix.sample(3000, 2).unwrap().without_labels();
    let bands = subbatch_ensemble(&idx, &holdout, 100, 0).unwrap();
    let trials = 200;
    let flagged = (0..trials)
        .filter(|&t| {
            let batch = mix.sample(100, 1000 + t).unwrap().without_labels();
            let report = evaluate(&idx, &batch, false).unwrap();
            any_flagged(&judge(&report, &bands, FlagPolicy::default()).unwrap())
        })
        .count();
    assert!(flagged * 20 <= trials as usize, "{flagged}/{trials} benign batches flagged");
}

#[test]
fn index_round_trips_through_disk() {
    let data = make_blobs(500, 20, 4, 8.0, 3).unwrap().without_labels();
    let idx = ManifoldIndex::build(data, 5).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("blobs.gidx");
    geomguard::index::save_index(&idx, &path).unwrap();
    let back = geomguard::index::load_index(&path, Default::default()).unwrap();
    assert_eq!(back.radii(), idx.radii());
    assert_eq!(back.reference(), idx.reference());
    let query = make_blobs(200, 20, 4, 8.0, 3).unwrap().without_labels();
    assert_eq!(evaluate(&back, &query, true).unwrap(), evaluate(&idx, &query, true).unwrap());
}
