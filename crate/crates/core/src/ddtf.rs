//! Data-driven tight frame learning.
//!
//! Alternates two exactly solvable steps on the stride-1 patch matrix `Y` of
//! the input:
//!
//! 1. coefficients `d = T_lambda(W u)` by hard thresholding;
//! 2. filters `W = (1/p) A` with `A = U V^T`, where `d Y^T = U S V^T`, which
//!    minimizes `||d - W u||^2` over all banks with `W^T W = I`.
//!
//! Both steps decrease `||d - W u||^2 + lambda^2 ||d||_0`, so the objective
//! recorded after every alternation never increases.

use nalgebra::DMatrix;
use ndarray::Array2;

use crate::error::{dim_err, param_err, Result};
use crate::framelet::{mad_noise_sigma, patch_matrix, FilterBank};

pub const DEFAULT_PATCH_SIZE: usize = 8;
pub const DEFAULT_ALTERNATIONS: usize = 15;
pub const DEFAULT_MAD_FACTOR: f64 = 3.5;

#[derive(Debug, Clone, PartialEq)]
pub struct DdtfConfig {
    pub patch_size: usize,
    /// Hard-threshold level. `None` uses `mad_factor` times the MAD noise
    /// estimate of the input.
    pub lambda: Option<f64>,
    pub mad_factor: f64,
    pub n_alternations: usize,
    /// Starting bank; B-spline banks are embedded into `p x p` kernels.
    pub init: FilterBank,
}

impl DdtfConfig {
    pub fn new(init: FilterBank) -> Self {
        Self {
            patch_size: DEFAULT_PATCH_SIZE,
            lambda: None,
            mad_factor: DEFAULT_MAD_FACTOR,
            n_alternations: DEFAULT_ALTERNATIONS,
            init,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_size < 2 {
            return param_err(format!("patch size must be at least 2, got {}", self.patch_size));
        }
        if self.n_alternations == 0 {
            return param_err("DDTF needs at least one alternation");
        }
        if let Some(l) = self.lambda {
            if !(l >= 0.0) {
                return param_err(format!("DDTF threshold must be non-negative, got {l}"));
            }
        }
        if !(self.mad_factor >= 0.0) {
            return param_err("MAD factor must be non-negative");
        }
        Ok(())
    }

    pub fn threshold_for(&self, x: &Array2<f64>) -> f64 {
        self.lambda.unwrap_or_else(|| self.mad_factor * mad_noise_sigma(x))
    }
}

#[derive(Debug, Clone)]
pub struct DdtfOutcome {
    pub bank: FilterBank,
    /// Objective at `(d^k, W^k)` for `k = 0..=K`.
    pub objective: Vec<f64>,
    pub lambda: f64,
    /// Set when the input carried no structure and the init bank was returned.
    pub degenerate: bool,
}

/// Learns a tight bank adapted to `x`.
pub fn learn(x: &Array2<f64>, cfg: &DdtfConfig) -> Result<DdtfOutcome> {
    cfg.validate()?;
    let p = cfg.patch_size;
    let (rows, cols) = x.dim();
    if rows < p || cols < p {
        return dim_err(format!("input {rows}x{cols} is smaller than the {p}x{p} patch"));
    }
    let mut bank = FilterBank::ddtf_init(&cfg.init, p)?;
    let lambda = cfg.threshold_for(x);

    let (lo, hi) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !(hi - lo > 1e-12 * hi.abs().max(1.0)) {
        log::warn!("DDTF input is constant; keeping the initial filter bank");
        return Ok(DdtfOutcome { bank, objective: Vec::new(), lambda, degenerate: true });
    }

    let patches = patch_matrix(x, p);
    let mut objective = Vec::with_capacity(cfg.n_alternations + 1);
    for _ in 0..cfg.n_alternations {
        let (coeffs, value) = threshold_step(&bank, &patches, lambda);
        objective.push(value);
        bank = filter_update(&patches, &coeffs, &bank)?;
    }
    objective.push(threshold_step(&bank, &patches, lambda).1);
    Ok(DdtfOutcome { bank, objective, lambda, degenerate: false })
}

/// Hard-thresholded coefficients of `patches` and the objective value there.
fn threshold_step(bank: &FilterBank, patches: &Array2<f64>, lambda: f64) -> (Array2<f64>, f64) {
    let mut coeffs = bank.matrix().dot(patches);
    let mut value = 0.0;
    coeffs.mapv_inplace(|v| {
        if v.abs() >= lambda {
            value += lambda * lambda;
            v
        } else {
            value += v * v;
            0.0
        }
    });
    (coeffs, value)
}

/// `||d - W u||^2 + lambda^2 ||d||_0` for a given coefficient matrix.
pub fn objective(bank: &FilterBank, patches: &Array2<f64>, coeffs: &Array2<f64>, lambda: f64) -> f64 {
    let c = bank.matrix().dot(patches);
    let fit: f64 = c.iter().zip(coeffs.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    let nnz = coeffs.iter().filter(|v| **v != 0.0).count() as f64;
    fit + lambda * lambda * nnz
}

/// Closed-form tight filter update from the patch matrix (`p^2 x n`) and the
/// thresholded coefficients (`p^2 x n`). Falls back to `previous` when the
/// SVD does not converge.
pub fn filter_update(patches: &Array2<f64>, coeffs: &Array2<f64>, previous: &FilterBank) -> Result<FilterBank> {
    let dim = patches.nrows();
    let p = (dim as f64).sqrt().round() as usize;
    if p * p != dim || coeffs.dim() != patches.dim() {
        return dim_err(format!(
            "patch matrix {:?} and coefficient matrix {:?} are inconsistent",
            patches.dim(),
            coeffs.dim()
        ));
    }
    let cross = coeffs.dot(&patches.t());
    let m = DMatrix::from_fn(dim, dim, |i, j| cross[[i, j]]);
    let Some(svd) = m.try_svd(true, true, 1e-14, 10_000) else {
        log::warn!("SVD did not converge; keeping the previous filter bank");
        return Ok(previous.clone());
    };
    let (Some(mut u), Some(mut vt)) = (svd.u, svd.v_t) else {
        return Ok(previous.clone());
    };
    // Sign convention: the largest-magnitude entry of each left singular
    // vector is positive. U V^T is unchanged by joint flips.
    for k in 0..dim {
        let col = u.column(k);
        let idx = col.iamax();
        if col[idx] < 0.0 {
            u.column_mut(k).neg_mut();
            vt.row_mut(k).neg_mut();
        }
    }
    let a = &u * &vt;
    if a.iter().any(|v| !v.is_finite()) {
        return Ok(previous.clone());
    }
    let mut q = Array2::from_shape_fn((dim, dim), |(i, j)| a[(i, j)]);
    put_lowpass_first(&mut q);
    FilterBank::from_orthogonal(&q, p)
}

/// Moves the filter with the largest DC gain to row 0 with a positive sum.
fn put_lowpass_first(q: &mut Array2<f64>) {
    let sums: Vec<f64> = q.rows().into_iter().map(|r| r.sum()).collect();
    let best = (0..sums.len()).max_by(|&a, &b| sums[a].abs().total_cmp(&sums[b].abs())).unwrap_or(0);
    if best != 0 {
        let row0 = q.row(0).to_owned();
        let rowb = q.row(best).to_owned();
        q.row_mut(0).assign(&rowb);
        q.row_mut(best).assign(&row0);
    }
    if sums[best] < 0.0 {
        q.row_mut(0).mapv_inplace(|v| -v);
    }
}
