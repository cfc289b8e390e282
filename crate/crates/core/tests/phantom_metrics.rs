use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ltomo::metrics::{cap_db, mssim, psnr, psnr_peak, region_metrics, PSNR_CAP_DB};
use ltomo::phantom::{add_noise, format_spec, parse_spec, phantom, shepp_logan_modified, Ellipse};
use ltomo::{Image, Sinogram, SinogramGrid, TruncationMask};

fn random_image(n: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Image::from_array(Array2::from_shape_fn((n, n), |_| rng.random_range(0.0..1.0)))
}

#[test]
fn reference_against_itself() {
    let u = phantom(64, &shepp_logan_modified()).unwrap();
    assert_eq!(cap_db(psnr(&u, &u).unwrap()), PSNR_CAP_DB);
    assert_eq!(mssim(&u, &u, 1.0).unwrap(), 1.0);
}

#[test]
fn added_disks_sit_outside_the_roi() {
    let spec = shepp_logan_modified();
    let extra = &spec[spec.len() - 2..];
    for e in extra {
        assert!(e.cx.hypot(e.cy) - e.a > 0.5);
    }
    let u = phantom(256, &spec).unwrap();
    // the disk centers are bright
    let col = ((0.55 + 1.0) / u.pixel_size) as usize;
    let row = ((1.0 + 0.4) / u.pixel_size) as usize;
    assert!(u.data[[row, col]] > 0.9);
}

#[test]
fn noise_only_inside_mask() {
    let grid = SinogramGrid::parallel(10, 40).unwrap();
    let f = Sinogram::from_array(&grid, Array2::from_elem(grid.shape(), 2.0)).unwrap();
    let mask = TruncationMask::new(&grid, 0.5).unwrap();
    let noisy = add_noise(&f, 0.01, 3, Some(&mask)).unwrap();
    for ((ij, &v), &k) in noisy.data.indexed_iter().zip(mask.kept.iter()) {
        if !k {
            assert_eq!(v, f.data[ij]);
        }
    }
    assert_ne!(noisy, f);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn psnr_translation_invariant(seed in any::<u64>(), c in -5.0f64..5.0) {
        let u = random_image(24, seed);
        let r = random_image(24, seed.wrapping_add(1));
        let shift = |x: &Image| Image::from_array(x.data.mapv(|v| v + c));
        let a = psnr(&u, &r).unwrap();
        let b = psnr(&shift(&u), &shift(&r)).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
        prop_assert!((psnr_peak(&u, &r, 1.0).unwrap() - psnr_peak(&shift(&u), &shift(&r), 1.0).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn mssim_symmetric_and_bounded(seed in any::<u64>()) {
        let u = random_image(32, seed);
        let r = random_image(32, seed ^ 0x55);
        let a = mssim(&u, &r, 1.0).unwrap();
        prop_assert!((a - mssim(&r, &u, 1.0).unwrap()).abs() < 1e-12);
        prop_assert!(a > -1.0 && a <= 1.0);
    }

    #[test]
    fn regions_split_the_error(seed in any::<u64>(), mu in 0.2f64..0.9) {
        let u = random_image(40, seed);
        let r = random_image(40, seed.wrapping_mul(3));
        let m = region_metrics(&u, &r, mu, 1.0).unwrap();
        // total squared error is the sum of the two regional errors
        let n = 1600.0;
        let total = n * 10f64.powf(-psnr_peak(&u, &r, 1.0).unwrap() / 10.0);
        let counts: Vec<f64> = {
            let inside = (0..40).flat_map(|i| (0..40).map(move |j| (i, j))).filter(|&(i, j)| {
                let (x, y) = u.pixel_center(i, j);
                x.hypot(y) < mu
            }).count() as f64;
            vec![inside, n - inside]
        };
        let parts = counts[0] * 10f64.powf(-m.interior.psnr_peak_db / 10.0) + counts[1] * 10f64.powf(-m.exterior.psnr_peak_db / 10.0);
        prop_assert!((parts - total).abs() < 1e-9 * total.max(1.0));
    }

    #[test]
    fn spec_text_round_trip(cx in -0.8f64..0.8, cy in -0.8f64..0.8, a in 0.01f64..0.5, b in 0.01f64..0.5, rot in -90.0f64..90.0, k in -1.0f64..1.0) {
        let spec = vec![Ellipse::new(cx, cy, a, b, rot, k).unwrap()];
        let back = parse_spec(&format_spec(&spec)).unwrap();
        prop_assert_eq!(back.len(), 1);
        prop_assert!((back[0].rotation - spec[0].rotation).abs() < 1e-12);
        prop_assert_eq!(phantom(16, &back).unwrap(), phantom(16, &spec).unwrap());
    }
}
