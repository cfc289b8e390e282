//! Ellipse phantoms and measurement noise.

use std::f64::consts::PI;
use std::fmt::Write as _;

use ndarray::{Array2, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{param_err, Error, Result};
use crate::grid::{Image, Sinogram, TruncationMask};

/// Name of the default test object: modified Shepp-Logan plus two disks
/// outside the `|x| < 0.5` region of interest.
pub const SHEPP_LOGAN_MOD: &str = "shepp-logan-mod";
pub const SHEPP_LOGAN: &str = "shepp-logan";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub cx: f64,
    pub cy: f64,
    /// Semi-axis along the rotated x direction.
    pub a: f64,
    pub b: f64,
    /// Counter-clockwise rotation in radians.
    pub rotation: f64,
    pub intensity: f64,
}

impl Ellipse {
    pub fn new(cx: f64, cy: f64, a: f64, b: f64, rotation_deg: f64, intensity: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0) {
            return param_err(format!("ellipse semi-axes must be positive, got ({a}, {b})"));
        }
        Ok(Self { cx, cy, a, b, rotation: rotation_deg * PI / 180.0, intensity })
    }

    pub fn disk(cx: f64, cy: f64, r: f64, intensity: f64) -> Result<Self> {
        Self::new(cx, cy, r, r, 0.0, intensity)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (sin, cos) = self.rotation.sin_cos();
        let (dx, dy) = (x - self.cx, y - self.cy);
        let xr = dx * cos + dy * sin;
        let yr = -dx * sin + dy * cos;
        (xr / self.a).powi(2) + (yr / self.b).powi(2) <= 1.0
    }
}

/// Toft's modified Shepp-Logan head (intensities in `[0, 1]`).
pub fn shepp_logan() -> Vec<Ellipse> {
    const TABLE: [[f64; 6]; 10] = [
        [0.0, 0.0, 0.69, 0.92, 0.0, 1.0],
        [0.0, -0.0184, 0.6624, 0.874, 0.0, -0.8],
        [0.22, 0.0, 0.11, 0.31, -18.0, -0.2],
        [-0.22, 0.0, 0.16, 0.41, 18.0, -0.2],
        [0.0, 0.35, 0.21, 0.25, 0.0, 0.1],
        [0.0, 0.1, 0.046, 0.046, 0.0, 0.1],
        [0.0, -0.1, 0.046, 0.046, 0.0, 0.1],
        [-0.08, -0.605, 0.046, 0.023, 0.0, 0.1],
        [0.0, -0.606, 0.023, 0.023, 0.0, 0.1],
        [0.06, -0.605, 0.023, 0.046, 0.0, 0.1],
    ];
    TABLE
        .iter()
        .map(|r| Ellipse::new(r[0], r[1], r[2], r[3], r[4], r[5]).expect("positive axes"))
        .collect()
}

/// Shepp-Logan with two round objects (radius 0.08, +0.8) at `(+-0.55, -0.4)`.
pub fn shepp_logan_modified() -> Vec<Ellipse> {
    let mut spec = shepp_logan();
    spec.push(Ellipse::disk(0.55, -0.4, 0.08, 0.8).expect("positive radius"));
    spec.push(Ellipse::disk(-0.55, -0.4, 0.08, 0.8).expect("positive radius"));
    spec
}

pub fn builtin(name: &str) -> Option<Vec<Ellipse>> {
    match name {
        SHEPP_LOGAN_MOD => Some(shepp_logan_modified()),
        SHEPP_LOGAN => Some(shepp_logan()),
        _ => None,
    }
}

/// Rasterizes the ellipse sum at pixel centers and clamps to `[0, 1]`.
pub fn phantom(n: usize, spec: &[Ellipse]) -> Result<Image> {
    if n < 16 {
        return param_err(format!("phantom size must be at least 16, got {n}"));
    }
    let mut img = Image::zeros(n);
    let centers = Array2::from_shape_fn((n, n), |(r, c)| img.pixel_center(r, c));
    Zip::from(&mut img.data).and(&centers).for_each(|v, &(x, y)| {
        let sum: f64 = spec.iter().filter(|e| e.contains(x, y)).map(|e| e.intensity).sum();
        *v = sum.clamp(0.0, 1.0);
    });
    Ok(img)
}

/// One ellipse per line: `x y A B angle_deg intensity`; `#` starts a comment.
pub fn parse_spec(text: &str) -> Result<Vec<Ellipse>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Format(format!("line {}: expected six numbers", lineno + 1)))?;
        if vals.len() != 6 {
            return Err(Error::Format(format!("line {}: expected six numbers, got {}", lineno + 1, vals.len())));
        }
        out.push(Ellipse::new(vals[0], vals[1], vals[2], vals[3], vals[4], vals[5])?);
    }
    Ok(out)
}

pub fn format_spec(spec: &[Ellipse]) -> String {
    let mut out = String::from("# x y A B angle_deg intensity\n");
    for e in spec {
        let _ = writeln!(out, "{} {} {} {} {} {}", e.cx, e.cy, e.a, e.b, e.rotation * 180.0 / PI, e.intensity);
    }
    out
}

/// Standard deviation `sigma_frac * max|f|`.
pub fn noise_sigma(f: &Sinogram, sigma_frac: f64) -> f64 {
    sigma_frac * f.max_abs()
}

/// Adds i.i.d. Gaussian noise with standard deviation `sigma_frac * max|f|`.
///
/// One normal draw is taken per grid point in storage order, so the noise at
/// a sample does not depend on the mask; with a mask, only measured samples
/// receive it.
pub fn add_noise(f: &Sinogram, sigma_frac: f64, seed: u64, mask: Option<&TruncationMask>) -> Result<Sinogram> {
    if !(sigma_frac >= 0.0) {
        return param_err(format!("noise fraction must be non-negative, got {sigma_frac}"));
    }
    if let Some(m) = mask {
        if m.grid != f.grid {
            return Err(Error::Dimension("mask grid does not match sinogram".into()));
        }
    }
    let sigma = noise_sigma(f, sigma_frac);
    if sigma == 0.0 {
        return Ok(f.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = f.clone();
    for ((idx, v), eps) in out.data.indexed_iter_mut().zip(normal.sample_iter(&mut rng)) {
        if mask.is_none_or(|m| m.kept[idx]) {
            *v += eps;
        }
    }
    Ok(out)
}
