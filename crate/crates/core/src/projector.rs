//! Discrete parallel-beam Radon transform and its exact transpose.
//!
//! The forward model is ray driven: for every `(angle, offset)` pair the line
//! `s * theta + t * theta_perp` is sampled at a fixed step in `t`, the image is
//! bilinearly interpolated at each sample, and the samples are summed with the
//! step length as weight. The adjoint scatters the same weights back, so the
//! pair is a matrix and its transpose up to round-off.

use std::f64::consts::SQRT_2;

use ndarray::{Array2, Axis};
use rayon::prelude::*;

use crate::error::{dim_err, param_err, Result};
use crate::grid::{restrict, restrict_complement, Image, Sinogram, SinogramGrid, TruncationMask};

/// Ray sampling step used unless configured otherwise, in pixels.
pub const DEFAULT_SAMPLING_STEP: f64 = 0.5;

/// Number of angle blocks accumulated separately in the adjoint before the
/// ordered reduction. Fixed so results do not depend on the thread count.
const ADJOINT_BLOCKS: usize = 8;

/// A linear map between images and sinograms with a known transpose.
pub trait RadonOperator: Sync {
    fn image_size(&self) -> usize;
    fn sino_grid(&self) -> &SinogramGrid;
    fn forward(&self, u: &Image) -> Result<Sinogram>;
    fn adjoint(&self, f: &Sinogram) -> Result<Image>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectorGeometry {
    /// Side length `N` of the square image.
    pub image_size: usize,
    pub sino_grid: SinogramGrid,
    /// Distance between consecutive ray samples, in pixels.
    pub sampling_step: f64,
}

impl ProjectorGeometry {
    pub fn new(image_size: usize, sino_grid: SinogramGrid) -> Result<Self> {
        Self::with_step(image_size, sino_grid, DEFAULT_SAMPLING_STEP)
    }

    pub fn with_step(image_size: usize, sino_grid: SinogramGrid, sampling_step: f64) -> Result<Self> {
        if image_size == 0 {
            return param_err("image size must be positive");
        }
        if !(sampling_step > 0.0) {
            return param_err(format!("sampling step must be positive, got {sampling_step}"));
        }
        Ok(Self { image_size, sino_grid, sampling_step })
    }

    /// Standard setup: `n_angles` angles and one detector bin per pixel column.
    pub fn standard(image_size: usize, n_angles: usize) -> Result<Self> {
        Self::new(image_size, SinogramGrid::parallel(n_angles, image_size)?)
    }

    pub fn pixel_size(&self) -> f64 {
        2.0 / self.image_size as f64
    }

    fn rays(&self) -> RaySampler {
        let ps = self.pixel_size();
        let h = self.sampling_step * ps;
        let n_samples = (2.0 * SQRT_2 / h).floor() as usize + 1;
        RaySampler { n: self.image_size, ps, h, n_samples }
    }
}

/// Per-ray sample positions in fractional pixel coordinates.
struct RaySampler {
    n: usize,
    ps: f64,
    h: f64,
    n_samples: usize,
}

struct Ray {
    c0: f64,
    dc: f64,
    r0: f64,
    dr: f64,
    first: usize,
    last: usize,
}

impl RaySampler {
    /// Sample `i` sits at `t = -sqrt(2) + i * h`; only samples whose bilinear
    /// stencil can touch the grid are visited.
    fn ray(&self, s: f64, cos: f64, sin: f64) -> Option<Ray> {
        let n = self.n as f64;
        // col(t) = ((s cos - t sin) + 1) / ps - 0.5, row(t) = (1 - (s sin + t cos)) / ps - 0.5
        let col_at = |t: f64| (s * cos - t * sin + 1.0) / self.ps - 0.5;
        let row_at = |t: f64| (1.0 - s * sin - t * cos) / self.ps - 0.5;
        let t0 = -SQRT_2;
        let c0 = col_at(t0);
        let r0 = row_at(t0);
        let dc = -sin * self.h / self.ps;
        let dr = -cos * self.h / self.ps;
        let (lo_c, hi_c) = index_window(c0, dc, n)?;
        let (lo_r, hi_r) = index_window(r0, dr, n)?;
        let lo = lo_c.max(lo_r).max(0.0).ceil();
        let hi = hi_c.min(hi_r).min((self.n_samples - 1) as f64).floor();
        if hi < lo {
            return None;
        }
        Some(Ray { c0, dc, r0, dr, first: lo as usize, last: hi as usize })
    }
}

/// Range of real sample indices `i` with `-1 < start + i * step < n`.
fn index_window(start: f64, step: f64, n: f64) -> Option<(f64, f64)> {
    if step.abs() < 1e-14 {
        return if start > -1.0 && start < n { Some((f64::NEG_INFINITY, f64::INFINITY)) } else { None };
    }
    let a = (-1.0 - start) / step;
    let b = (n - start) / step;
    Some((a.min(b), a.max(b)))
}

impl RadonOperator for ProjectorGeometry {
    fn image_size(&self) -> usize {
        self.image_size
    }

    fn sino_grid(&self) -> &SinogramGrid {
        &self.sino_grid
    }

    fn forward(&self, u: &Image) -> Result<Sinogram> {
        radon_forward(u, self)
    }

    fn adjoint(&self, f: &Sinogram) -> Result<Image> {
        radon_adjoint(f, self)
    }
}

/// Line integrals of `u` over every ray of the geometry.
pub fn radon_forward(u: &Image, g: &ProjectorGeometry) -> Result<Sinogram> {
    let n = g.image_size;
    if u.shape() != (n, n) {
        return dim_err(format!("image {:?} does not match geometry size {n}", u.shape()));
    }
    // one ring of zeros lets every bilinear stencil skip bounds checks
    let stride = n + 2;
    let mut img = vec![0.0; stride * stride];
    for (r, row) in u.data.rows().into_iter().enumerate() {
        let dst = &mut img[(r + 1) * stride + 1..(r + 1) * stride + 1 + n];
        dst.iter_mut().zip(row.iter()).for_each(|(d, &v)| *d = v);
    }
    let rays = g.rays();
    let grid = &g.sino_grid;
    let mut data = Array2::<f64>::zeros(grid.shape());
    data.axis_iter_mut(Axis(0)).into_par_iter().enumerate().for_each(|(j, mut row)| {
        let (sin, cos) = grid.angles[j].sin_cos();
        for (k, out) in row.iter_mut().enumerate() {
            if let Some(ray) = rays.ray(grid.bin_centers[k], cos, sin) {
                *out = rays.h * gather(&img, stride, &ray);
            }
        }
    });
    Ok(Sinogram { grid: grid.clone(), data })
}

/// Transpose of [`radon_forward`].
pub fn radon_adjoint(f: &Sinogram, g: &ProjectorGeometry) -> Result<Image> {
    if f.grid != g.sino_grid {
        return dim_err("sinogram grid does not match projector geometry");
    }
    let n = g.image_size;
    let stride = n + 2;
    let rays = g.rays();
    let grid = &g.sino_grid;
    let n_angles = grid.n_angles();
    let block = n_angles.div_ceil(ADJOINT_BLOCKS).max(1);
    let partials: Vec<Vec<f64>> = (0..n_angles)
        .step_by(block)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|start| {
            let mut acc = vec![0.0; stride * stride];
            for j in start..(start + block).min(n_angles) {
                let (sin, cos) = grid.angles[j].sin_cos();
                for (k, &v) in f.data.row(j).iter().enumerate() {
                    if v == 0.0 {
                        continue;
                    }
                    if let Some(ray) = rays.ray(grid.bin_centers[k], cos, sin) {
                        scatter(&mut acc, stride, &ray, rays.h * v);
                    }
                }
            }
            acc
        })
        .collect();
    let mut out = vec![0.0; stride * stride];
    for part in &partials {
        for (o, p) in out.iter_mut().zip(part) {
            *o += p;
        }
    }
    let data = Array2::from_shape_fn((n, n), |(r, c)| out[(r + 1) * stride + c + 1]);
    Ok(Image::from_array(data))
}

/// Walks the samples of `ray`, yielding the base index of each bilinear
/// stencil in the padded image and its four weights. Sample windows keep
/// `-1 < c, r < n`, so the shifted coordinates are positive and truncation
/// equals floor; the clamp only guards the closed upper end.
#[inline(always)]
fn for_each_sample(ray: &Ray, stride: usize, mut visit: impl FnMut(usize, [f64; 4])) {
    let hi = (stride - 2) as i32;
    for i in ray.first..=ray.last {
        let t = i as i32 as f64;
        let c = ray.c0 + t * ray.dc + 1.0;
        let r = ray.r0 + t * ray.dr + 1.0;
        let (ci, ri) = ((c as i32).min(hi), (r as i32).min(hi));
        let (fc, fr) = (c - ci as f64, r - ri as f64);
        let w = [(1.0 - fr) * (1.0 - fc), (1.0 - fr) * fc, fr * (1.0 - fc), fr * fc];
        visit(ri as usize * stride + ci as usize, w);
    }
}

fn gather(img: &[f64], stride: usize, ray: &Ray) -> f64 {
    let mut acc = 0.0;
    for_each_sample(ray, stride, |b, w| {
        let top = &img[b..b + 2];
        let bottom = &img[b + stride..b + stride + 2];
        acc += (w[0] * top[0] + w[1] * top[1]) + (w[2] * bottom[0] + w[3] * bottom[1]);
    });
    acc
}

fn scatter(acc: &mut [f64], stride: usize, ray: &Ray, value: f64) {
    for_each_sample(ray, stride, |b, w| {
        acc[b] += w[0] * value;
        acc[b + 1] += w[1] * value;
        acc[b + stride] += w[2] * value;
        acc[b + stride + 1] += w[3] * value;
    });
}

/// Power-iteration estimate of `||A1^T A1||` for the stacked constraint
/// operator acting on `(f, u)`:
///
/// ```text
/// A1 = [ R         0       ]
///      [ 0         R P     ]
///      [ R^c      -R^c P   ]
/// ```
///
/// The estimate is the running maximum of `||B x_k|| / ||x_k||` and never
/// decreases with `iters`.
pub fn operator_norm_sq<P: RadonOperator>(p: &P, mask: &TruncationMask, iters: usize) -> Result<f64> {
    if iters == 0 {
        return param_err("power iteration needs at least one step");
    }
    if mask.grid != *p.sino_grid() {
        return dim_err("mask grid does not match projector geometry");
    }
    let n = p.image_size();
    let mut f = Sinogram { grid: mask.grid.clone(), data: Array2::ones(mask.grid.shape()) };
    let mut u = Image::from_array(Array2::ones((n, n)));
    let mut best: f64 = 0.0;
    for _ in 0..iters {
        let norm = (f.dot(&f) + u.dot(&u)).sqrt();
        if norm == 0.0 {
            break;
        }
        f.data /= norm;
        u.data /= norm;
        let (bf, bu) = normal_operator(p, mask, &f, &u)?;
        let est = (bf.dot(&bf) + bu.dot(&bu)).sqrt();
        best = best.max(est);
        f = bf;
        u = bu;
    }
    Ok(best)
}

/// `A1^T A1 (f, u)`.
pub(crate) fn normal_operator<P: RadonOperator>(
    p: &P,
    mask: &TruncationMask,
    f: &Sinogram,
    u: &Image,
) -> Result<(Sinogram, Image)> {
    let pu = p.forward(u)?;
    let mut gap = f.clone();
    gap.data -= &pu.data;
    let gap = restrict_complement(&gap, mask)?;
    let mut out_f = restrict(f, mask)?;
    out_f.data += &gap.data;
    let mut inner = restrict(&pu, mask)?;
    inner.data -= &gap.data;
    Ok((out_f, p.adjoint(&inner)?))
}

/// `||A1 (f, u)||^2`, used to check Rayleigh-quotient bounds.
pub fn constraint_energy<P: RadonOperator>(p: &P, mask: &TruncationMask, f: &Sinogram, u: &Image) -> Result<f64> {
    let pu = p.forward(u)?;
    let a = restrict(f, mask)?;
    let b = restrict(&pu, mask)?;
    let mut gap = f.clone();
    gap.data -= &pu.data;
    let c = restrict_complement(&gap, mask)?;
    Ok(a.dot(&a) + b.dot(&b) + c.dot(&c))
}
