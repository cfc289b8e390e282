//! Filtered backprojection.
//!
//! Each projection is convolved with the band-limited ramp kernel
//! (`h[0] = 1/(4 ds^2)`, `h[n odd] = -1/(pi n ds)^2`) in the Fourier domain,
//! optionally apodized with a Hann window, and backprojected with the
//! transpose of the ray-driven projector.

use std::f64::consts::PI;
use std::str::FromStr;

use ndarray::Axis;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{dim_err, Error, Result};
use crate::grid::{Image, Sinogram};
use crate::projector::{radon_adjoint, ProjectorGeometry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FbpFilter {
    Ramp,
    #[default]
    Hann,
}

impl FromStr for FbpFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ramp" => Ok(Self::Ramp),
            "hann" => Ok(Self::Hann),
            other => Err(Error::InvalidParameter(format!("unknown FBP filter '{other}'"))),
        }
    }
}

/// Frequency response of the apodized ramp on a zero-padded grid of `len`.
fn ramp_response(len: usize, ds: f64, filter: FbpFilter) -> Vec<f64> {
    let mut kernel = vec![Complex64::new(0.0, 0.0); len];
    kernel[0].re = 1.0 / (4.0 * ds * ds);
    for n in 1..len / 2 {
        if n % 2 == 1 {
            let v = -1.0 / (PI * n as f64 * ds).powi(2);
            kernel[n].re = v;
            kernel[len - n].re = v;
        }
    }
    FftPlanner::new().plan_fft_forward(len).process(&mut kernel);
    (0..len)
        .map(|k| {
            let freq = k.min(len - k) as f64 / len as f64; // cycles per sample, in [0, 1/2]
            let window = match filter {
                FbpFilter::Ramp => 1.0,
                FbpFilter::Hann => 0.5 * (1.0 + (2.0 * PI * freq).cos()),
            };
            kernel[k].re * ds * window
        })
        .collect()
}

/// Applies the ramp filter to every projection of `f`.
pub fn ramp_filter(f: &Sinogram, filter: FbpFilter) -> Sinogram {
    let n_bins = f.grid.n_bins();
    let len = (2 * n_bins).next_power_of_two();
    let response = ramp_response(len, f.grid.bin_width(), filter);
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);
    let mut out = f.clone();
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    for mut row in out.data.axis_iter_mut(Axis(0)) {
        buf.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        for (b, &v) in buf.iter_mut().zip(row.iter()) {
            b.re = v;
        }
        fwd.process(&mut buf);
        for (b, &h) in buf.iter_mut().zip(&response) {
            *b *= h;
        }
        inv.process(&mut buf);
        for (o, b) in row.iter_mut().zip(&buf) {
            *o = b.re / len as f64;
        }
    }
    out
}

/// Filtered backprojection of `f`. Values outside the measured region are
/// whatever `f` holds there (zero-filled truncated data stays zero-filled).
pub fn fbp_reconstruct(f: &Sinogram, g: &ProjectorGeometry, filter: FbpFilter) -> Result<Image> {
    if f.grid != g.sino_grid {
        return dim_err("sinogram grid does not match projector geometry");
    }
    let q = ramp_filter(f, filter);
    let mut u = radon_adjoint(&q, g)?;
    // P^T spreads each projection sample over a strip; normalize to the
    // continuous backprojection integral over [0, pi).
    let ps = g.pixel_size();
    let scale = PI / g.sino_grid.n_angles() as f64 * g.sino_grid.bin_width() / (ps * ps);
    u.data *= scale;
    Ok(u)
}
