//! The one Euclidean distance every code path agrees on.
//!
//! Squared distances accumulate in eight `f32` lanes (lane `l` takes the
//! coordinates `l, l+8, l+16, ...`), and the lanes are summed in `f64` in lane
//! order before rounding back to `f32`. The brute-force oracle, the kd-tree and
//! the blocked kernel all make their final membership decisions with this
//! function, which is what lets the fast paths match the oracle exactly.

const LANES: usize = 8;

/// Squared Euclidean distance. `a` and `b` must have equal length.
#[inline]
pub fn sq_euclidean(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0f32; LANES];
    let ca = a.chunks_exact(LANES);
    let cb = b.chunks_exact(LANES);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..LANES {
            let diff = x[l] - y[l];
            acc[l] += diff * diff;
        }
    }
    for (l, (x, y)) in ra.iter().zip(rb).enumerate() {
        let diff = x - y;
        acc[l] += diff * diff;
    }
    let mut total = 0f64;
    for v in acc {
        total += v as f64;
    }
    total as f32
}

#[inline]
pub fn euclidean(a: &[f32], b: &[f32]) -> f32 {
    sq_euclidean(a, b).sqrt()
}

/// The smallest `f32` `t` with `sqrt(t) >= radius`.
///
/// For every squared distance `s`, `s.sqrt() < radius` holds exactly when
/// `s < t`, so hot loops can compare squared values without losing the
/// strict `distance < radius` semantics.
pub fn sq_threshold(radius: f32) -> f32 {
    debug_assert!(radius >= 0.0);
    if radius <= 0.0 {
        return 0.0;
    }
    let mut t = radius * radius;
    while t > 0.0 && prev_up(t).sqrt() >= radius {
        t = prev_up(t);
    }
    while t.sqrt() < radius {
        t = next_up(t);
    }
    t
}

fn next_up(x: f32) -> f32 {
    f32::from_bits(x.to_bits() + 1)
}

fn prev_up(x: f32) -> f32 {
    f32::from_bits(x.to_bits() - 1)
}

/// Unit roundoff of `f32` arithmetic.
pub(crate) const F32_UNIT_ROUNDOFF: f64 = f32::EPSILON as f64 / 2.0;

/// Relative error allowance `c` such that, for centered vectors with squared
/// norms `na` and `nb`, a squared distance assembled as `na + nb - 2⟨a, b⟩`
/// from an `f32` matrix product differs from [`sq_euclidean`] by at most
/// `c · (na + nb)`.
///
/// The bound combines the dot-product error (`γ_d` per product), the
/// rounding of norms and of the final combination, the error of the
/// canonical distance itself, and the centering step. It holds for any
/// summation order, so it covers blocked and FMA-based matrix kernels.
pub(crate) fn filter_error_coeff(d: usize) -> f32 {
    ((4 * d + 32) as f64 * F32_UNIT_ROUNDOFF * 1.01) as f32
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn small_integer_distances_are_exact() {
        assert_eq!(sq_euclidean(&[0.0], &[3.0]), 9.0);
        assert_eq!(sq_euclidean(&[1.0, 2.0, 3.0], &[4.0, 6.0, 3.0]), 25.0);
        let a: Vec<f32> = (0..19).map(|i| i as f32).collect();
        let b = vec![0.0f32; 19];
        let expected: f32 = (0..19).map(|i| (i * i) as f32).sum();
        assert_eq!(sq_euclidean(&a, &b), expected);
    }

    #[test]
    fn threshold_of_exact_square() {
        assert_eq!(sq_threshold(2.0), 4.0);
        assert_eq!(sq_threshold(0.0), 0.0);
        // 1.0 == sqrt(1.0), so a squared distance of exactly 1 is not inside radius 1.
        assert!(!(1.0f32 < sq_threshold(1.0)));
    }

    proptest! {
        #[test]
        fn threshold_matches_sqrt_comparison(r in 0.0f32..1e6, s in 0.0f32..1e12) {
            let t = sq_threshold(r);
            prop_assert_eq!(s.sqrt() < r, s < t);
            // Probe the neighbourhood of the threshold too.
            for cand in [t, f32::from_bits(t.to_bits().saturating_sub(1)), f32::from_bits(t.to_bits() + 1)] {
                prop_assert_eq!(cand.sqrt() < r, cand < t);
            }
        }

        #[test]
        fn close_to_f64_reference(
            v in proptest::collection::vec((-10.0f32..10.0, -10.0f32..10.0), 1..80)
        ) {
            let a: Vec<f32> = v.iter().map(|p| p.0).collect();
            let b: Vec<f32> = v.iter().map(|p| p.1).collect();
            let exact: f64 = a.iter().zip(&b).map(|(x, y)| (*x as f64 - *y as f64).powi(2)).sum();
            let got = sq_euclidean(&a, &b) as f64;
            prop_assert!((got - exact).abs() <= 1e-5 * exact.max(1e-30));
        }
    }
}
