use ndarray::{Array2, Array3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ltomo::framelet::{decompose, hard_threshold, isotropic_l1, reconstruct, soft_threshold};
use ltomo::{FilterBank, FrameletCoeffs, FrameletSystem};

fn random(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Minimizes a convex function of one variable on `[lo, hi]` by bisecting
/// on the sign of its (sub)derivative.
fn argmin(mut lo: f64, mut hi: f64, slope: impl Fn(f64) -> f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if slope(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn soft_threshold_matches_numerical_minimizer() {
    // one level, one low-pass and two high-pass bands on a 6x6 grid
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let data = Array3::from_shape_fn((3, 6, 6), |_| rng.random_range(-3.0..3.0));
    let c = FrameletCoeffs { levels: 1, bands_per_level: 3, data };
    for alpha in [0.0, 0.4, 1.3, 2.5] {
        let d = soft_threshold(&c, alpha).unwrap();
        for r in 0..6 {
            for k in 0..6 {
                let (v1, v2) = (c.data[[1, r, k]], c.data[[2, r, k]]);
                // cost: alpha * |(x, y)| + |(x, y) - (v1, v2)|^2 / 2
                let pull = |a: f64, b: f64| if a == 0.0 { 0.0 } else { alpha * a / a.hypot(b) };
                let inner = |x: f64| argmin(-6.0, 6.0, |y| pull(y, x) + y - v2);
                let x = argmin(-6.0, 6.0, |x| pull(x, inner(x)) + x - v1);
                let y = inner(x);
                assert!((d.data[[1, r, k]] - x).abs() < 1e-8, "alpha {alpha}: {} vs {x}", d.data[[1, r, k]]);
                assert!((d.data[[2, r, k]] - y).abs() < 1e-8);
                assert_eq!(d.data[[0, r, k]], c.data[[0, r, k]]);
            }
        }
    }
}

#[test]
fn hard_threshold_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for trial in 0..50 {
        let vals: Vec<f64> = (0..8).map(|_| rng.random_range(-2.0..2.0)).collect();
        let lambda = if trial == 0 { vals[0].abs() } else { rng.random_range(0.0..2.0) };
        let c = FrameletCoeffs { levels: 1, bands_per_level: 8, data: Array3::from_shape_vec((8, 1, 1), vals.clone()).unwrap() };
        let d = hard_threshold(&c, lambda).unwrap();
        let mut best = (f64::INFINITY, 0u32);
        for pattern in 0u32..256 {
            let cost: f64 = vals
                .iter()
                .enumerate()
                .map(|(i, v)| if pattern >> i & 1 == 1 { lambda * lambda } else { v * v })
                .sum();
            // ties go to the pattern keeping more coefficients
            if cost < best.0 || (cost == best.0 && pattern.count_ones() > best.1.count_ones()) {
                best = (cost, pattern);
            }
        }
        for (i, v) in vals.iter().enumerate() {
            let expect = if best.1 >> i & 1 == 1 { *v } else { 0.0 };
            assert_eq!(d.data[[i, 0, 0]], expect, "trial {trial}, coefficient {i}");
        }
    }
}

#[test]
fn isotropic_norm_is_homogeneous() {
    let sys = FrameletSystem::cubic3();
    let c = decompose(&random(20, 20, 1), &sys).unwrap();
    let scaled = FrameletCoeffs { data: &c.data * -2.5, ..c.clone() };
    assert!((isotropic_l1(&scaled) - 2.5 * isotropic_l1(&c)).abs() < 1e-9 * isotropic_l1(&c));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn perfect_reconstruction(seed in any::<u64>(), rows in 9usize..40, cols in 9usize..40, levels in 1usize..4, cubic in any::<bool>()) {
        let bank = if cubic { FilterBank::cubic_bspline() } else { FilterBank::linear_bspline() };
        let sys = FrameletSystem::new(bank, levels).unwrap();
        let x = random(rows, cols, seed);
        let c = decompose(&x, &sys).unwrap();
        prop_assert!(max_abs_diff(&reconstruct(&c, &sys).unwrap(), &x) < 1e-10);
        let energy = c.norm() - x.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(energy.abs() < 1e-10);
    }

    #[test]
    fn thresholds_do_not_expand(seed in any::<u64>(), alpha in 0.0f64..2.0) {
        let sys = FrameletSystem::linear1();
        let a = decompose(&random(12, 12, seed), &sys).unwrap();
        let b = decompose(&random(12, 12, seed ^ 0xabcd), &sys).unwrap();
        let sa = soft_threshold(&a, alpha).unwrap();
        let sb = soft_threshold(&b, alpha).unwrap();
        let before = FrameletCoeffs { data: &a.data - &b.data, ..a.clone() }.norm();
        let after = FrameletCoeffs { data: &sa.data - &sb.data, ..a.clone() }.norm();
        prop_assert!(after <= before + 1e-12);
        prop_assert!(hard_threshold(&a, alpha).unwrap().norm() <= a.norm());
    }
}
