//! Pixel lattices, sinogram grids and truncation masks.
//!
//! Images live on the square `[-1, 1]^2`, which contains the unit disk that
//! supports the object. Pixel `(row, col)` has its center at
//! `x = -1 + (col + 0.5) * pixel_size`, `y = 1 - (row + 0.5) * pixel_size`,
//! so row 0 is the top of the picture.
//!
//! Sinograms are stored angle-major: `data[[j, k]]` is the line integral at
//! angle `angles[j]` and detector offset `bin_centers[k]`. Detector offsets
//! cover `[-1, 1]` with `n_bins` equal bins.

use std::f64::consts::PI;

use ndarray::{Array2, Zip};

use crate::error::{dim_err, param_err, Result};

/// Real-valued image on an `N x N` Cartesian lattice covering `[-1, 1]^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub pixel_size: f64,
    /// Shape `(height, width)`, row-major.
    pub data: Array2<f64>,
}

impl Image {
    pub fn zeros(n: usize) -> Self {
        Self::from_array(Array2::zeros((n, n)))
    }

    /// Wraps a square array; the pixel size follows from the side length.
    pub fn from_array(data: Array2<f64>) -> Self {
        let n = data.ncols().max(1);
        Self { pixel_size: 2.0 / n as f64, data }
    }

    pub fn width(&self) -> usize {
        self.data.ncols()
    }

    pub fn height(&self) -> usize {
        self.data.nrows()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.data.dim()
    }

    /// Center of pixel `(row, col)` in normalized coordinates.
    pub fn pixel_center(&self, row: usize, col: usize) -> (f64, f64) {
        let x = -1.0 + (col as f64 + 0.5) * self.pixel_size;
        let y = 1.0 - (row as f64 + 0.5) * self.pixel_size;
        (x, y)
    }

    pub fn dot(&self, other: &Image) -> f64 {
        dot(&self.data, &other.data)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Componentwise projection onto `[lo, hi]`.
    pub fn clamp(&self, lo: f64, hi: f64) -> Image {
        Image { pixel_size: self.pixel_size, data: self.data.mapv(|v| v.clamp(lo, hi)) }
    }
}

/// Parallel-beam sampling of the Radon domain.
#[derive(Debug, Clone, PartialEq)]
pub struct SinogramGrid {
    pub angles: Vec<f64>,
    pub bin_centers: Vec<f64>,
}

impl SinogramGrid {
    /// `n_angles` equispaced angles in `[0, pi)` and `n_bins` detector bins of
    /// width `2 / n_bins` spanning `[-1, 1]`.
    pub fn parallel(n_angles: usize, n_bins: usize) -> Result<Self> {
        if n_angles == 0 || n_bins == 0 {
            return param_err("sinogram grid needs at least one angle and one bin");
        }
        let angles = (0..n_angles).map(|j| PI * j as f64 / n_angles as f64).collect();
        let width = 2.0 / n_bins as f64;
        let bin_centers = (0..n_bins).map(|k| -1.0 + (k as f64 + 0.5) * width).collect();
        Ok(Self { angles, bin_centers })
    }

    pub fn n_angles(&self) -> usize {
        self.angles.len()
    }

    pub fn n_bins(&self) -> usize {
        self.bin_centers.len()
    }

    pub fn bin_width(&self) -> f64 {
        2.0 / self.n_bins() as f64
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_angles(), self.n_bins())
    }
}

/// Projection data over a [`SinogramGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    pub grid: SinogramGrid,
    /// Shape `(n_angles, n_bins)`.
    pub data: Array2<f64>,
}

impl Sinogram {
    pub fn zeros(grid: &SinogramGrid) -> Self {
        Self { data: Array2::zeros(grid.shape()), grid: grid.clone() }
    }

    pub fn from_array(grid: &SinogramGrid, data: Array2<f64>) -> Result<Self> {
        if data.dim() != grid.shape() {
            return dim_err(format!(
                "sinogram data {:?} does not match grid {:?}",
                data.dim(),
                grid.shape()
            ));
        }
        Ok(Self { grid: grid.clone(), data })
    }

    pub fn dot(&self, other: &Sinogram) -> f64 {
        dot(&self.data, &other.data)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Region `|s| < mu` of the detector, replicated over every angle.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncationMask {
    pub grid: SinogramGrid,
    /// ROI radius. `f64::INFINITY` marks untruncated data.
    pub mu: f64,
    /// Shape `(n_angles, n_bins)`; true where the sample is measured.
    pub kept: Array2<bool>,
}

impl TruncationMask {
    pub fn new(grid: &SinogramGrid, mu: f64) -> Result<Self> {
        if mu.is_nan() || mu < 0.0 {
            return param_err(format!("ROI radius must be non-negative, got {mu}"));
        }
        let kept = Array2::from_shape_fn(grid.shape(), |(_, k)| grid.bin_centers[k].abs() < mu);
        Ok(Self { grid: grid.clone(), mu, kept })
    }

    /// Mask that keeps every sample.
    pub fn full(grid: &SinogramGrid) -> Self {
        Self { grid: grid.clone(), mu: f64::INFINITY, kept: Array2::from_elem(grid.shape(), true) }
    }

    pub fn complement(&self) -> Array2<bool> {
        self.kept.mapv(|k| !k)
    }

    /// Number of measured samples.
    pub fn count(&self) -> usize {
        self.kept.iter().filter(|&&k| k).count()
    }

    fn check(&self, v: &Sinogram) -> Result<()> {
        if v.grid != self.grid {
            return dim_err("sinogram grid differs from mask grid");
        }
        Ok(())
    }
}

/// Zeroes every sample outside the measured region.
pub fn restrict(v: &Sinogram, mask: &TruncationMask) -> Result<Sinogram> {
    mask.check(v)?;
    Ok(select(v, &mask.kept, true))
}

/// Zeroes every sample inside the measured region.
pub fn restrict_complement(v: &Sinogram, mask: &TruncationMask) -> Result<Sinogram> {
    mask.check(v)?;
    Ok(select(v, &mask.kept, false))
}

fn select(v: &Sinogram, kept: &Array2<bool>, keep_if: bool) -> Sinogram {
    let data = Zip::from(&v.data)
        .and(kept)
        .map_collect(|&x, &k| if k == keep_if { x } else { 0.0 });
    Sinogram { grid: v.grid.clone(), data }
}

pub(crate) fn dot(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    Zip::from(a).and(b).fold(0.0, |acc, &x, &y| acc + x * y)
}
