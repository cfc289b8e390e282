//! Bregmanized operator splitting for the joint image/sinogram model and the
//! image-only sparsity baseline.
//!
//! The joint model recovers an extrapolated sinogram `f` and an image `u`
//! from truncated data `f0` measured on the mask `L`:
//!
//! ```text
//! min  l1 |W1 f|_1 + l2 |W2 u|_1
//! s.t. R_L f = f0,  R_L P u = f0,  R_Lc (P u - f) = 0,  f >= 0,  0 <= u <= a
//! ```

use std::fmt::Write as _;
use std::time::Instant;

use ndarray::{Array2, Zip};

use crate::ddtf::{self, DdtfConfig};
use crate::error::{dim_err, param_err, Error, Result};
use crate::fbp::{fbp_reconstruct, FbpFilter};
use crate::framelet::{decompose, isotropic_l1, reconstruct, soft_threshold_in_place, FilterBank, FrameletCoeffs, FrameletSystem};
use crate::grid::{Image, Sinogram, TruncationMask};
use crate::metrics::psnr_peak;
use crate::projector::{operator_norm_sq, ProjectorGeometry, RadonOperator};

pub const DEFAULT_MAX_ITERS: usize = 2000;
pub const DEFAULT_TOL: f64 = 1e-5;
/// Safety factor applied to the power-iteration estimate of `||A1^T A1||`.
pub const KAPPA_MARGIN: f64 = 1.05;
pub const POWER_ITERS: usize = 30;
/// Window used when checking that the summed constraint residual decreases.
pub const FEASIBILITY_WINDOW: usize = 50;
/// Slack on the discrepancy-principle stopping rule.
pub const DISCREPANCY_FACTOR: f64 = 1.05;

/// When to relearn the data-driven banks during a joint solve.
#[derive(Debug, Clone, PartialEq)]
pub struct DdtfSchedule {
    pub sinogram: DdtfConfig,
    pub image: DdtfConfig,
    /// Banks are relearned at iterations `0, period, 2 * period, ...`.
    pub period: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverParams {
    pub lambda1: f64,
    pub lambda2: f64,
    /// `None` estimates `||A1^T A1||` and scales it by [`KAPPA_MARGIN`].
    pub kappa: Option<f64>,
    pub beta: f64,
    /// Upper bound of the image box constraint.
    pub a: f64,
    pub max_iters: usize,
    pub tol: f64,
    /// Noise level of `f0`; enables discrepancy-principle stopping.
    pub noise_sigma: Option<f64>,
    pub ddtf: Option<DdtfSchedule>,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            lambda1: 100.0,
            lambda2: 0.01,
            kappa: None,
            beta: 1.0,
            a: 1.0,
            max_iters: DEFAULT_MAX_ITERS,
            tol: DEFAULT_TOL,
            noise_sigma: None,
            ddtf: None,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda1 >= 0.0 && self.lambda2 >= 0.0) {
            return param_err(format!("weights must be non-negative, got ({}, {})", self.lambda1, self.lambda2));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return param_err(format!("beta must be positive, got {}", self.beta));
        }
        if !(self.a > 0.0) {
            return param_err(format!("box bound must be positive, got {}", self.a));
        }
        if let Some(k) = self.kappa {
            if !(k > 0.0 && k.is_finite()) {
                return param_err(format!("kappa must be positive, got {k}"));
            }
        }
        if !(self.tol >= 0.0) {
            return param_err("tolerance must be non-negative");
        }
        if let Some(s) = self.noise_sigma {
            if !(s >= 0.0) {
                return param_err("noise level must be non-negative");
            }
        }
        if let Some(d) = &self.ddtf {
            if d.period == 0 {
                return param_err("relearn period must be positive");
            }
            d.sinogram.validate()?;
            d.image.validate()?;
        }
        Ok(())
    }

    fn kappa_or_err(&self) -> Result<f64> {
        self.kappa.ok_or_else(|| Error::InvalidParameter("kappa has not been resolved".into()))
    }
}

/// Checks a user-supplied kappa against the convergence bound, or derives
/// one from the power-iteration estimate.
pub fn resolve_kappa(params: &SolverParams, g: &ProjectorGeometry, mask: &TruncationMask) -> Result<f64> {
    let est = operator_norm_sq(g, mask, POWER_ITERS)?;
    match params.kappa {
        Some(k) if k <= est => param_err(format!("kappa {k} does not exceed the operator norm estimate {est}")),
        Some(k) => Ok(k),
        None => Ok(KAPPA_MARGIN * est),
    }
}

/// The fixed data of a joint problem.
#[derive(Debug, Clone, Copy)]
pub struct JointProblem<'a> {
    pub f0: &'a Sinogram,
    pub mask: &'a TruncationMask,
    pub geometry: &'a ProjectorGeometry,
    pub sys1: &'a FrameletSystem,
    pub sys2: &'a FrameletSystem,
}

impl JointProblem<'_> {
    fn check(&self) -> Result<()> {
        if self.f0.grid != self.geometry.sino_grid || self.mask.grid != self.geometry.sino_grid {
            return dim_err("data, mask and projector grids differ");
        }
        let outside = Zip::from(&self.f0.data).and(&self.mask.kept).fold(false, |acc, &v, &k| acc || (!k && v != 0.0));
        if outside {
            return param_err("measured data must vanish outside the mask");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    /// Extrapolated sinogram.
    pub f: Sinogram,
    pub u: Image,
    pub v1: Sinogram,
    pub v2: Image,
    pub f1: Sinogram,
    pub f2: Sinogram,
    pub f3: Sinogram,
    pub d1: FrameletCoeffs,
    pub b1: FrameletCoeffs,
    pub d2: FrameletCoeffs,
    pub b2: FrameletCoeffs,
    /// Cached `P u` for the current `u`.
    pub pu: Sinogram,
    pub iter: usize,
}

fn zero_coeffs(sys: &FrameletSystem, x: &Array2<f64>) -> Result<FrameletCoeffs> {
    // run one transform so the layout (and size checks) match the system
    let mut c = decompose(x, sys)?;
    c.data.fill(0.0);
    Ok(c)
}

/// `f = f0`, `u = clamp(FBP(f0), 0, a)`, `f1 = f2 = f0`, everything else zero.
pub fn init_state(prob: &JointProblem, a: f64) -> Result<SolverState> {
    prob.check()?;
    let u = fbp_reconstruct(prob.f0, prob.geometry, FbpFilter::default())?.clamp(0.0, a);
    let pu = prob.geometry.forward(&u)?;
    let zero_sino = Sinogram::zeros(&prob.f0.grid);
    Ok(SolverState {
        f: prob.f0.clone(),
        v1: zero_sino.clone(),
        v2: Image::zeros(u.width()),
        f1: prob.f0.clone(),
        f2: prob.f0.clone(),
        f3: zero_sino,
        d1: zero_coeffs(prob.sys1, &prob.f0.data)?,
        b1: zero_coeffs(prob.sys1, &prob.f0.data)?,
        d2: zero_coeffs(prob.sys2, &u.data)?,
        b2: zero_coeffs(prob.sys2, &u.data)?,
        u,
        pu,
        iter: 0,
    })
}

/// Closed-form proximal step for a tight frame followed by the box projection:
/// `clamp((kappa v + beta synth) / (kappa + beta), lo, hi)` where `synth` is
/// `W^T (d - b)`.
pub fn proximal_box(v: &Array2<f64>, synth: &Array2<f64>, kappa: f64, beta: f64, lo: f64, hi: f64) -> Array2<f64> {
    let w = 1.0 / (kappa + beta);
    Zip::from(v).and(synth).map_collect(|&v, &s| ((kappa * v + beta * s) * w).clamp(lo, hi))
}

fn ensure_finite(ok: bool, step: &'static str, iter: usize) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Divergence { step, iter })
    }
}

fn sub(a: &FrameletCoeffs, b: &FrameletCoeffs) -> FrameletCoeffs {
    FrameletCoeffs { levels: a.levels, bands_per_level: a.bands_per_level, data: &a.data - &b.data }
}

/// `d = T_{lambda/beta}(W x + b)` and `b <- W x + b - d`. Returns `|W x|` in
/// the isotropic norm for the objective.
fn shrink_update(
    x: &Array2<f64>,
    sys: &FrameletSystem,
    lambda: f64,
    beta: f64,
    d: &mut FrameletCoeffs,
    b: &mut FrameletCoeffs,
) -> Result<f64> {
    let wx = decompose(x, sys)?;
    wx.check_layout(b)?;
    let norm = isotropic_l1(&wx);
    let mut c = wx;
    c.data += &b.data;
    let mut shrunk = c.clone();
    soft_threshold_in_place(&mut shrunk, lambda / beta)?;
    c.data -= &shrunk.data;
    *b = c;
    *d = shrunk;
    Ok(norm)
}

/// Residuals and diagnostics of one sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterRecord {
    pub iter: usize,
    /// `||R_L f - f0||`.
    pub res_data_f: f64,
    /// `||R_L P u - f0||`.
    pub res_data_u: f64,
    /// `||R_Lc (P u - f)||`.
    pub res_consistency: f64,
    pub objective: f64,
    pub rel_change: f64,
    pub psnr_vs_reference: Option<f64>,
}

impl IterRecord {
    pub fn feasibility(&self) -> f64 {
        self.res_data_f + self.res_data_u + self.res_consistency
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Tolerance,
    Discrepancy,
    MaxIters,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceLog {
    pub records: Vec<IterRecord>,
    pub stop: StopReason,
    /// Iterations whose summed residual exceeded the value one window earlier.
    pub feasibility_violations: Vec<usize>,
    pub elapsed_secs: f64,
}

impl ConvergenceLog {
    fn new() -> Self {
        Self { records: Vec::new(), stop: StopReason::MaxIters, feasibility_violations: Vec::new(), elapsed_secs: 0.0 }
    }

    fn push(&mut self, rec: IterRecord) {
        let n = self.records.len();
        if n >= FEASIBILITY_WINDOW {
            let earlier = self.records[n - FEASIBILITY_WINDOW].feasibility();
            if rec.feasibility() > earlier * (1.0 + 1e-12) {
                self.feasibility_violations.push(rec.iter);
            }
        }
        self.records.push(rec);
    }

    pub fn last(&self) -> Option<&IterRecord> {
        self.records.last()
    }

    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,res_data_f,res_data_u,res_consistency,objective,rel_change,psnr_vs_reference\n");
        for r in &self.records {
            let psnr = r.psnr_vs_reference.map(|v| format!("{v:.6}")).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{}",
                r.iter, r.res_data_f, r.res_data_u, r.res_consistency, r.objective, r.rel_change, psnr
            );
        }
        out
    }
}

fn rel_change(new: &Image, old: &Image) -> f64 {
    let diff = Zip::from(&new.data).and(&old.data).fold(0.0, |acc, a, b| acc + (a - b) * (a - b)).sqrt();
    let n = new.norm();
    if n > 0.0 {
        diff / n
    } else {
        diff
    }
}

fn masked_norm(a: &Array2<f64>, b: &Array2<f64>, kept: &Array2<bool>, want: bool) -> f64 {
    Zip::from(a)
        .and(b)
        .and(kept)
        .fold(0.0, |acc, &x, &y, &k| if k == want { acc + (x - y) * (x - y) } else { acc })
        .sqrt()
}

/// One sweep of steps (1)-(11). `params.kappa` must already be resolved.
pub fn bos_step(state: &mut SolverState, prob: &JointProblem, params: &SolverParams) -> Result<IterRecord> {
    let kappa = params.kappa_or_err()?;
    let beta = params.beta;
    let it = state.iter;
    let kept = &prob.mask.kept;
    let inv_k = 1.0 / kappa;

    // (1) gradient step on the sinogram
    Zip::from(&mut state.v1.data)
        .and(&state.f.data)
        .and(&state.f1.data)
        .and(&state.f3.data)
        .and(&state.pu.data)
        .and(kept)
        .for_each(|v, &f, &f1, &f3, &pu, &k| {
            let g = if k { f - f1 } else { f - pu - f3 };
            *v = f - inv_k * g;
        });
    ensure_finite(state.v1.is_finite(), "step 1 (sinogram gradient)", it)?;

    // (2) gradient step on the image
    let q = Zip::from(&state.pu.data)
        .and(&state.f.data)
        .and(&state.f2.data)
        .and(&state.f3.data)
        .and(kept)
        .map_collect(|&pu, &f, &f2, &f3, &k| if k { pu - f2 } else { pu - (f - f3) });
    let grad = prob.geometry.adjoint(&Sinogram { grid: state.pu.grid.clone(), data: q })?;
    state.v2.data = &state.u.data - &(grad.data * inv_k);
    ensure_finite(state.v2.is_finite(), "step 2 (image gradient)", it)?;

    // (3)-(4) proximal steps with projection
    let synth1 = reconstruct(&sub(&state.d1, &state.b1), prob.sys1)?;
    let f_new = proximal_box(&state.v1.data, &synth1, kappa, beta, 0.0, f64::INFINITY);
    ensure_finite(f_new.iter().all(|v| v.is_finite()), "step 3 (sinogram update)", it)?;
    let synth2 = reconstruct(&sub(&state.d2, &state.b2), prob.sys2)?;
    let u_new = Image { pixel_size: state.u.pixel_size, data: proximal_box(&state.v2.data, &synth2, kappa, beta, 0.0, params.a) };
    ensure_finite(u_new.is_finite(), "step 4 (image update)", it)?;
    let change = rel_change(&u_new, &state.u);
    state.f.data = f_new;
    state.u = u_new;
    state.pu = prob.geometry.forward(&state.u)?;
    ensure_finite(state.pu.is_finite(), "step 4 (image update)", it)?;

    // (5)-(6) shrinkage, with (10)-(11) folded in
    let n1 = shrink_update(&state.f.data, prob.sys1, params.lambda1, beta, &mut state.d1, &mut state.b1)?;
    ensure_finite(state.d1.is_finite() && state.b1.is_finite(), "step 5 (sinogram shrinkage)", it)?;
    let n2 = shrink_update(&state.u.data, prob.sys2, params.lambda2, beta, &mut state.d2, &mut state.b2)?;
    ensure_finite(state.d2.is_finite() && state.b2.is_finite(), "step 6 (image shrinkage)", it)?;

    // (7)-(9) Bregman updates of the constraint multipliers
    let f0 = &prob.f0.data;
    Zip::from(&mut state.f1.data).and(f0).and(&state.f.data).and(kept).for_each(|f1, &g, &f, &k| {
        *f1 += g - if k { f } else { 0.0 };
    });
    Zip::from(&mut state.f2.data).and(f0).and(&state.pu.data).and(kept).for_each(|f2, &g, &pu, &k| {
        *f2 += g - if k { pu } else { 0.0 };
    });
    Zip::from(&mut state.f3.data).and(&state.pu.data).and(&state.f.data).and(kept).for_each(|f3, &pu, &f, &k| {
        if !k {
            *f3 += pu - f;
        }
    });
    ensure_finite(
        state.f1.is_finite() && state.f2.is_finite() && state.f3.is_finite(),
        "steps 7-9 (Bregman updates)",
        it,
    )?;

    state.iter += 1;
    Ok(IterRecord {
        iter: state.iter,
        res_data_f: masked_norm(&state.f.data, f0, kept, true),
        res_data_u: masked_norm(&state.pu.data, f0, kept, true),
        res_consistency: masked_norm(&state.pu.data, &state.f.data, kept, false),
        objective: params.lambda1 * n1 + params.lambda2 * n2,
        rel_change: change,
        psnr_vs_reference: None,
    })
}

/// Banks learned at one relearn epoch of a joint solve.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnedBanks {
    pub iter: usize,
    pub sinogram: FilterBank,
    pub image: FilterBank,
}

#[derive(Debug, Clone)]
pub struct JointSolution {
    pub u: Image,
    pub f: Sinogram,
    pub log: ConvergenceLog,
    pub banks: Vec<LearnedBanks>,
}

fn discrepancy_target(params: &SolverParams, mask: &TruncationMask) -> Option<f64> {
    params.noise_sigma.map(|s| DISCREPANCY_FACTOR * (mask.count() as f64).sqrt() * s)
}

fn stop_reason(rec: &IterRecord, params: &SolverParams, target: Option<f64>) -> Option<StopReason> {
    if target.is_some_and(|t| rec.res_data_u <= t) {
        Some(StopReason::Discrepancy)
    } else if rec.rel_change < params.tol {
        Some(StopReason::Tolerance)
    } else {
        None
    }
}

fn relearn(
    state: &mut SolverState,
    sched: &DdtfSchedule,
    current: &mut (FrameletSystem, FrameletSystem),
) -> Result<(FilterBank, FilterBank)> {
    let mut cfg1 = sched.sinogram.clone();
    if current.0.bank.kind() == crate::framelet::BankKind::Learned {
        cfg1.init = current.0.bank.clone();
    }
    let mut cfg2 = sched.image.clone();
    if current.1.bank.kind() == crate::framelet::BankKind::Learned {
        cfg2.init = current.1.bank.clone();
    }
    let out1 = ddtf::learn(&state.f.data, &cfg1)?;
    let out2 = ddtf::learn(&state.u.data, &cfg2)?;
    log::debug!(
        "relearned banks at iteration {} (thresholds {:.3e}, {:.3e})",
        state.iter,
        out1.lambda,
        out2.lambda
    );
    current.0 = FrameletSystem::new(out1.bank.clone(), 1)?;
    current.1 = FrameletSystem::new(out2.bank.clone(), 1)?;
    // coefficients of the old frame mean nothing in the new one
    state.d1 = decompose(&state.f.data, &current.0)?;
    state.b1 = FrameletCoeffs::zeros_like(&state.d1);
    state.d2 = decompose(&state.u.data, &current.1)?;
    state.b2 = FrameletCoeffs::zeros_like(&state.d2);
    Ok((out1.bank, out2.bank))
}

/// Runs the joint model from [`init_state`] until the stopping rule fires.
pub fn solve_joint(prob: &JointProblem, params: &SolverParams, reference: Option<&Image>) -> Result<JointSolution> {
    params.validate()?;
    prob.check()?;
    let start = Instant::now();
    let mut params = params.clone();
    params.kappa = Some(resolve_kappa(&params, prob.geometry, prob.mask)?);
    log::info!("joint solve: kappa = {:.4e}, beta = {}", params.kappa.unwrap_or_default(), params.beta);
    let target = discrepancy_target(&params, prob.mask);

    let mut state = init_state(prob, params.a)?;
    let mut systems = (prob.sys1.clone(), prob.sys2.clone());
    let mut banks = Vec::new();
    let mut log = ConvergenceLog::new();
    for k in 0..params.max_iters {
        if let Some(sched) = &params.ddtf {
            if k % sched.period == 0 {
                let (b1, b2) = relearn(&mut state, sched, &mut systems)?;
                banks.push(LearnedBanks { iter: k, sinogram: b1, image: b2 });
            }
        }
        let current = JointProblem { sys1: &systems.0, sys2: &systems.1, ..*prob };
        let mut rec = bos_step(&mut state, &current, &params)?;
        rec.psnr_vs_reference = reference.map(|r| psnr_peak(&state.u, r, params.a)).transpose()?;
        log.push(rec);
        if let Some(reason) = stop_reason(&rec, &params, target) {
            log.stop = reason;
            break;
        }
    }
    finish_log(&mut log, start);
    Ok(JointSolution { u: state.u, f: state.f, log, banks })
}

fn finish_log(log: &mut ConvergenceLog, start: Instant) {
    log.elapsed_secs = start.elapsed().as_secs_f64();
    if !log.feasibility_violations.is_empty() {
        log::warn!(
            "summed constraint residual rose over a {FEASIBILITY_WINDOW}-iteration window at {} iterations",
            log.feasibility_violations.len()
        );
    }
    log::info!("{} iterations in {:.1}s, stop: {:?}", log.iterations(), log.elapsed_secs, log.stop);
}

#[derive(Debug, Clone)]
pub struct BaselineSolution {
    pub u: Image,
    pub log: ConvergenceLog,
}

/// Image-only analysis model `min |W u|_1 s.t. R_L P u = f0, 0 <= u <= a`
/// solved by the same splitting. The shrinkage weight is `params.lambda2`.
pub fn solve_baseline(
    f0: &Sinogram,
    mask: &TruncationMask,
    g: &ProjectorGeometry,
    sys: &FrameletSystem,
    params: &SolverParams,
    reference: Option<&Image>,
) -> Result<BaselineSolution> {
    params.validate()?;
    let prob = JointProblem { f0, mask, geometry: g, sys1: sys, sys2: sys };
    prob.check()?;
    let start = Instant::now();
    let kappa = resolve_kappa(params, g, mask)?;
    log::info!("baseline solve: kappa = {kappa:.4e}, beta = {}", params.beta);
    let target = discrepancy_target(params, mask);
    let kept = &mask.kept;

    let mut u = fbp_reconstruct(f0, g, FbpFilter::default())?.clamp(0.0, params.a);
    let mut pu = g.forward(&u)?;
    let mut fk = f0.clone();
    let mut d = zero_coeffs(sys, &u.data)?;
    let mut b = FrameletCoeffs::zeros_like(&d);
    let mut log = ConvergenceLog::new();
    for it in 0..params.max_iters {
        let q = Zip::from(&pu.data).and(&fk.data).and(kept).map_collect(|&p, &fk, &k| if k { p - fk } else { 0.0 });
        let grad = g.adjoint(&Sinogram { grid: pu.grid.clone(), data: q })?;
        let v = &u.data - &(grad.data / kappa);
        ensure_finite(v.iter().all(|x| x.is_finite()), "baseline gradient step", it)?;
        let synth = reconstruct(&sub(&d, &b), sys)?;
        let u_new = Image { pixel_size: u.pixel_size, data: proximal_box(&v, &synth, kappa, params.beta, 0.0, params.a) };
        ensure_finite(u_new.is_finite(), "baseline image update", it)?;
        let change = rel_change(&u_new, &u);
        u = u_new;
        pu = g.forward(&u)?;
        let norm = shrink_update(&u.data, sys, params.lambda2, params.beta, &mut d, &mut b)?;
        ensure_finite(d.is_finite() && b.is_finite(), "baseline shrinkage", it)?;
        Zip::from(&mut fk.data).and(&f0.data).and(&pu.data).and(kept).for_each(|fk, &g0, &p, &k| {
            *fk += g0 - if k { p } else { 0.0 };
        });
        ensure_finite(fk.is_finite(), "baseline Bregman update", it)?;
        let rec = IterRecord {
            iter: it + 1,
            res_data_f: 0.0,
            res_data_u: masked_norm(&pu.data, &f0.data, kept, true),
            res_consistency: 0.0,
            objective: params.lambda2 * norm,
            rel_change: change,
            psnr_vs_reference: reference.map(|r| psnr_peak(&u, r, params.a)).transpose()?,
        };
        log.push(rec);
        if let Some(reason) = stop_reason(&rec, params, target) {
            log.stop = reason;
            break;
        }
    }
    finish_log(&mut log, start);
    Ok(BaselineSolution { u, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{phantom, shepp_logan_modified};
    use crate::projector::radon_forward;

    fn small_problem(n: usize, n_angles: usize, mu: f64) -> (ProjectorGeometry, TruncationMask, Image, Sinogram) {
        let g = ProjectorGeometry::standard(n, n_angles).unwrap();
        let mask = if mu.is_finite() { TruncationMask::new(&g.sino_grid, mu).unwrap() } else { TruncationMask::full(&g.sino_grid) };
        let truth = phantom(n, &shepp_logan_modified()).unwrap();
        let full = radon_forward(&truth, &g).unwrap();
        let f0 = crate::grid::restrict(&full, &mask).unwrap();
        (g, mask, truth, f0)
    }

    #[test]
    fn proximal_with_zero_beta_is_projection() {
        let v = Array2::from_shape_vec((1, 3), vec![-1.0, 0.5, 2.0]).unwrap();
        let s = Array2::from_elem((1, 3), 7.0);
        let out = proximal_box(&v, &s, 3.0, 0.0, 0.0, f64::INFINITY);
        assert_eq!(out.as_slice().unwrap(), &[0.0, 0.5, 2.0]);
    }

    #[test]
    fn zero_data_initializes_to_zero() {
        let g = ProjectorGeometry::standard(32, 12).unwrap();
        let mask = TruncationMask::new(&g.sino_grid, 0.5).unwrap();
        let f0 = Sinogram::zeros(&g.sino_grid);
        let (s1, s2) = (FrameletSystem::cubic3(), FrameletSystem::linear1());
        let prob = JointProblem { f0: &f0, mask: &mask, geometry: &g, sys1: &s1, sys2: &s2 };
        let st = init_state(&prob, 1.0).unwrap();
        assert_eq!(st.u.norm(), 0.0);
        assert_eq!(st.f.norm() + st.f1.norm() + st.f3.norm(), 0.0);
        assert_eq!(st.d1.norm() + st.b2.norm(), 0.0);
    }

    #[test]
    fn rejects_data_outside_mask() {
        let (g, mask, _, _) = small_problem(32, 12, 0.5);
        let f0 = Sinogram { grid: g.sino_grid.clone(), data: Array2::ones(g.sino_grid.shape()) };
        let (s1, s2) = (FrameletSystem::cubic3(), FrameletSystem::linear1());
        let prob = JointProblem { f0: &f0, mask: &mask, geometry: &g, sys1: &s1, sys2: &s2 };
        assert!(init_state(&prob, 1.0).is_err());
    }

    #[test]
    fn kappa_below_bound_is_rejected() {
        let (g, mask, _, _) = small_problem(32, 12, 0.5);
        let params = SolverParams { kappa: Some(1e-6), ..SolverParams::default() };
        assert!(resolve_kappa(&params, &g, &mask).is_err());
        let k = resolve_kappa(&SolverParams::default(), &g, &mask).unwrap();
        assert!(k > 0.0);
    }

    #[test]
    fn invalid_params() {
        assert!(SolverParams { beta: 0.0, ..SolverParams::default() }.validate().is_err());
        assert!(SolverParams { lambda1: -1.0, ..SolverParams::default() }.validate().is_err());
        assert!(SolverParams { a: 0.0, ..SolverParams::default() }.validate().is_err());
        assert!(SolverParams::default().validate().is_ok());
    }

    #[test]
    fn unresolved_kappa_is_an_error() {
        let (g, mask, _, f0) = small_problem(32, 12, 0.5);
        let (s1, s2) = (FrameletSystem::cubic3(), FrameletSystem::linear1());
        let prob = JointProblem { f0: &f0, mask: &mask, geometry: &g, sys1: &s1, sys2: &s2 };
        let mut st = init_state(&prob, 1.0).unwrap();
        assert!(bos_step(&mut st, &prob, &SolverParams::default()).is_err());
    }

    #[test]
    fn box_constraints_and_multiplier_identity() {
        let (g, mask, _, f0) = small_problem(32, 18, 0.5);
        let (s1, s2) = (FrameletSystem::cubic3(), FrameletSystem::linear1());
        let prob = JointProblem { f0: &f0, mask: &mask, geometry: &g, sys1: &s1, sys2: &s2 };
        let mut params = SolverParams { lambda1: 1.0, lambda2: 0.01, ..SolverParams::default() };
        params.kappa = Some(resolve_kappa(&params, &g, &mask).unwrap());
        let mut st = init_state(&prob, params.a).unwrap();
        for _ in 0..5 {
            let f1_old = st.f1.clone();
            bos_step(&mut st, &prob, &params).unwrap();
            assert!(st.u.data.iter().all(|&v| (0.0..=1.0).contains(&v)));
            assert!(st.f.data.iter().all(|&v| v >= 0.0));
            for ((idx, &f1), &old) in st.f1.data.indexed_iter().zip(f1_old.data.iter()) {
                let rf = if mask.kept[idx] { st.f.data[idx] } else { 0.0 };
                assert!((f1 - old - (f0.data[idx] - rf)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_data_is_a_fixed_point() {
        let g = ProjectorGeometry::standard(32, 12).unwrap();
        let mask = TruncationMask::new(&g.sino_grid, 0.5).unwrap();
        let f0 = Sinogram::zeros(&g.sino_grid);
        let params = SolverParams { max_iters: 5, tol: 0.0, ..SolverParams::default() };
        let out = solve_baseline(&f0, &mask, &g, &FrameletSystem::linear1(), &params, None).unwrap();
        assert_eq!(out.u.norm(), 0.0);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let (g, mask, truth, f0) = small_problem(32, 12, 0.5);
        let params = SolverParams { max_iters: 3, tol: 0.0, ..SolverParams::default() };
        let (s1, s2) = (FrameletSystem::cubic3(), FrameletSystem::linear1());
        let prob = JointProblem { f0: &f0, mask: &mask, geometry: &g, sys1: &s1, sys2: &s2 };
        let out = solve_joint(&prob, &params, Some(&truth)).unwrap();
        let csv = out.log.to_csv();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.starts_with("iter,res_data_f,res_data_u,res_consistency,objective,rel_change,psnr_vs_reference"));
        assert!(out.log.records[0].psnr_vs_reference.is_some());
        assert_eq!(out.log.stop, StopReason::MaxIters);
    }

    #[test]
    fn ddtf_schedule_records_epochs() {
        let (g, mask, _, f0) = small_problem(32, 16, 0.5);
        let (s1, s2) = (FrameletSystem::cubic3(), FrameletSystem::linear1());
        let mut sino = DdtfConfig::new(FilterBank::cubic_bspline());
        sino.n_alternations = 2;
        let mut img = DdtfConfig::new(FilterBank::linear_bspline());
        img.n_alternations = 2;
        let params = SolverParams {
            max_iters: 5,
            tol: 0.0,
            ddtf: Some(DdtfSchedule { sinogram: sino, image: img, period: 2 }),
            ..SolverParams::default()
        };
        let prob = JointProblem { f0: &f0, mask: &mask, geometry: &g, sys1: &s1, sys2: &s2 };
        let out = solve_joint(&prob, &params, None).unwrap();
        assert_eq!(out.banks.iter().map(|b| b.iter).collect::<Vec<_>>(), vec![0, 2, 4]);
        for b in &out.banks {
            assert!(b.image.check_patch_tightness() < 1e-10);
        }
    }
}
