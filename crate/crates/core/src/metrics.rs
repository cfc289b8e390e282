//! Image fidelity metrics.

use ndarray::{Array2, Zip};

use crate::error::{dim_err, Result};
use crate::grid::Image;

/// Value reported in tables in place of an infinite PSNR.
pub const PSNR_CAP_DB: f64 = 999.0;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;

fn check(u: &Image, reference: &Image) -> Result<()> {
    if u.shape() != reference.shape() {
        return dim_err(format!("image {:?} vs reference {:?}", u.shape(), reference.shape()));
    }
    Ok(())
}

fn residual_norm(u: &Image, reference: &Image) -> f64 {
    Zip::from(&u.data).and(&reference.data).fold(0.0, |acc, a, b| acc + (a - b) * (a - b)).sqrt()
}

/// `-20 log10(||u - ref||_2 / N)` with `N` the number of pixels. Identical
/// images give `+inf`.
pub fn psnr(u: &Image, reference: &Image) -> Result<f64> {
    check(u, reference)?;
    let n = u.data.len() as f64;
    Ok(-20.0 * (residual_norm(u, reference) / n).log10())
}

/// Conventional peak PSNR, `20 log10(peak / rms)`.
pub fn psnr_peak(u: &Image, reference: &Image, peak: f64) -> Result<f64> {
    check(u, reference)?;
    let rms = residual_norm(u, reference) / (u.data.len() as f64).sqrt();
    Ok(20.0 * (peak / rms).log10())
}

pub fn cap_db(v: f64) -> f64 {
    v.min(PSNR_CAP_DB)
}

fn gaussian_window() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let w: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-((i as f64 - half).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Separable "valid" filtering with the normalized Gaussian window.
fn blur_valid(x: &Array2<f64>, w: &[f64]) -> Array2<f64> {
    let (rows, cols) = x.dim();
    let k = w.len();
    let (orow, ocol) = (rows + 1 - k, cols + 1 - k);
    let horiz = Array2::from_shape_fn((rows, ocol), |(r, c)| (0..k).map(|t| w[t] * x[[r, c + t]]).sum::<f64>());
    Array2::from_shape_fn((orow, ocol), |(r, c)| (0..k).map(|t| w[t] * horiz[[r + t, c]]).sum::<f64>())
}

/// Local SSIM map over every window lying fully inside the image. Entry
/// `(i, j)` belongs to the window centered on pixel `(i + 5, j + 5)`.
pub fn ssim_map(u: &Image, reference: &Image, dynamic_range: f64) -> Result<Array2<f64>> {
    check(u, reference)?;
    let (rows, cols) = u.shape();
    if rows < SSIM_WINDOW || cols < SSIM_WINDOW {
        return dim_err(format!("SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels"));
    }
    let w = gaussian_window();
    let (x, y) = (&u.data, &reference.data);
    let mu_x = blur_valid(x, &w);
    let mu_y = blur_valid(y, &w);
    let xx = blur_valid(&(x * x), &w);
    let yy = blur_valid(&(y * y), &w);
    let xy = blur_valid(&(x * y), &w);
    let c1 = (0.01 * dynamic_range).powi(2);
    let c2 = (0.03 * dynamic_range).powi(2);
    let mut map = Array2::zeros(mu_x.dim());
    Zip::from(&mut map)
        .and(&mu_x)
        .and(&mu_y)
        .and(&xx)
        .and(&yy)
        .and(&xy)
        .for_each(|m, &mx, &my, &sxx, &syy, &sxy| {
            let vx = sxx - mx * mx;
            let vy = syy - my * my;
            let cov = sxy - mx * my;
            *m = ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        });
    Ok(map)
}

/// Mean structural similarity with an 11x11 Gaussian window (sigma 1.5).
pub fn mssim(u: &Image, reference: &Image, dynamic_range: f64) -> Result<f64> {
    let map = ssim_map(u, reference, dynamic_range)?;
    Ok(map.sum() / map.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionScores {
    pub psnr_db: f64,
    pub psnr_peak_db: f64,
    pub mssim: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionMetrics {
    /// Pixels with `|x| < mu`.
    pub interior: RegionScores,
    pub exterior: RegionScores,
}

/// Scores split between the disk `|x| < mu` and its complement. SSIM windows
/// are assigned to the region of their center pixel.
pub fn region_metrics(u: &Image, reference: &Image, mu: f64, dynamic_range: f64) -> Result<RegionMetrics> {
    let map = ssim_map(u, reference, dynamic_range)?;
    let half = SSIM_WINDOW / 2;
    let inside = |r: usize, c: usize| {
        let (x, y) = u.pixel_center(r, c);
        x.hypot(y) < mu
    };
    let mut acc = [(0.0, 0usize, 0.0, 0usize); 2];
    for (((r, c), &a), &b) in u.data.indexed_iter().zip(reference.data.iter()) {
        let slot = &mut acc[usize::from(!inside(r, c))];
        slot.0 += (a - b) * (a - b);
        slot.1 += 1;
    }
    for ((r, c), &s) in map.indexed_iter() {
        let slot = &mut acc[usize::from(!inside(r + half, c + half))];
        slot.2 += s;
        slot.3 += 1;
    }
    let score = |(sq, n, ssim, m): (f64, usize, f64, usize)| RegionScores {
        psnr_db: -20.0 * (sq.sqrt() / n as f64).log10(),
        psnr_peak_db: 20.0 * (dynamic_range * (n as f64).sqrt() / sq.sqrt()).log10(),
        mssim: if m > 0 { ssim / m as f64 } else { f64::NAN },
    };
    Ok(RegionMetrics { interior: score(acc[0]), exterior: score(acc[1]) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(n: usize) -> Image {
        Image::from_array(Array2::from_shape_fn((n, n), |(r, c)| ((r * 3 + c * 5) % 17) as f64 / 16.0))
    }

    #[test]
    fn psnr_identical_is_infinite() {
        let a = ramp(16);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        assert_eq!(cap_db(psnr(&a, &a).unwrap()), PSNR_CAP_DB);
    }

    #[test]
    fn psnr_constant_offset_hand_value() {
        let a = Image::zeros(256);
        let b = Image::from_array(Array2::ones((256, 256)));
        let v = psnr(&b, &a).unwrap();
        let want = -20.0 * (256.0f64 / 65536.0).log10();
        assert!((v - want).abs() < 1e-12);
        assert!((v - 48.16).abs() < 0.01);
        assert!((psnr_peak(&b, &a, 1.0).unwrap() - 0.0).abs() < 1e-12);
    }

    #[test]
    fn psnr_shape_mismatch() {
        assert!(psnr(&Image::zeros(16), &Image::zeros(17)).is_err());
        assert!(mssim(&Image::zeros(16), &Image::zeros(17), 1.0).is_err());
    }

    #[test]
    fn psnr_translation_invariant() {
        let a = ramp(20);
        let mut b = ramp(20);
        b.data.mapv_inplace(|v| v * 0.9 + 0.01);
        let (mut a2, mut b2) = (a.clone(), b.clone());
        a2.data += 0.25;
        b2.data += 0.25;
        assert!((psnr(&a, &b).unwrap() - psnr(&a2, &b2).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn mssim_identity_and_inversion() {
        let a = ramp(32);
        assert_eq!(mssim(&a, &a, 1.0).unwrap(), 1.0);
        let inv = Image::from_array(a.data.mapv(|v| 1.0 - v));
        assert!(mssim(&inv, &a, 1.0).unwrap() < 1.0);
    }

    #[test]
    fn mssim_symmetric() {
        let a = ramp(24);
        let b = Image::from_array(a.data.mapv(|v| (v * 7.0).sin().abs()));
        let d = mssim(&a, &b, 1.0).unwrap() - mssim(&b, &a, 1.0).unwrap();
        assert!(d.abs() < 1e-12);
    }

    #[test]
    fn regions_partition_pixels() {
        let a = ramp(32);
        let mut b = a.clone();
        b.data[[0, 0]] += 1.0; // corner: exterior only
        let m = region_metrics(&b, &a, 0.5, 1.0).unwrap();
        assert_eq!(m.interior.psnr_db, f64::INFINITY);
        assert!(m.exterior.psnr_db.is_finite());
        assert_eq!(m.interior.mssim, 1.0);
    }
}
