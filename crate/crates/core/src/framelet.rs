//! Undecimated tight wavelet frames.
//!
//! Two families of filter banks are supported:
//!
//! * Tensor-product B-spline framelets (linear and cubic). Convolutions use
//!   half-sample symmetric boundary extension; every 1-D filter is symmetric
//!   or antisymmetric, which keeps the analysis operator an isometry on finite
//!   grids. Levels use a-trous dilation `2^l`.
//! * Learned banks of `p x p` kernels whose flattened matrix is `1/p` times an
//!   orthogonal matrix. These act as a stride-1 patch transform with periodic
//!   wrap-around and are single-level.
//!
//! Band `0` of every level is the low-pass band. For multi-level systems the
//! low-pass band of every level except the coarsest is handed down to the
//! next level and stored as zeros.

use std::fmt::Write as _;
use std::str::FromStr;

use ndarray::{s, Array2, Array3, ArrayView2, Axis, Zip};

use crate::error::{dim_err, param_err, Error, Result};

const SQRT2_4: f64 = std::f64::consts::SQRT_2 / 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BankKind {
    LinearBspline,
    CubicBspline,
    Learned,
}

impl BankKind {
    pub fn name(self) -> &'static str {
        match self {
            BankKind::LinearBspline => "linear-bspline",
            BankKind::CubicBspline => "cubic-bspline",
            BankKind::Learned => "learned",
        }
    }
}

impl FromStr for BankKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear-bspline" => Ok(BankKind::LinearBspline),
            "cubic-bspline" => Ok(BankKind::CubicBspline),
            "learned" => Ok(BankKind::Learned),
            other => Err(Error::Format(format!("unknown filter bank kind '{other}'"))),
        }
    }
}

/// A filter bank `a_0 .. a_{m-1}`; `a_0` is the low-pass kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    kind: BankKind,
    /// Centered odd-length 1-D taps for tensor-product banks.
    taps: Vec<Vec<f64>>,
    kernels: Vec<Array2<f64>>,
}

impl FilterBank {
    pub fn linear_bspline() -> Self {
        Self::tensor(
            BankKind::LinearBspline,
            vec![
                vec![0.25, 0.5, 0.25],
                vec![SQRT2_4, 0.0, -SQRT2_4],
                vec![-0.25, 0.5, -0.25],
            ],
        )
    }

    pub fn cubic_bspline() -> Self {
        let s6 = 6f64.sqrt() / 16.0;
        Self::tensor(
            BankKind::CubicBspline,
            vec![
                vec![1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0],
                vec![1.0 / 8.0, 2.0 / 8.0, 0.0, -2.0 / 8.0, -1.0 / 8.0],
                vec![s6, 0.0, -2.0 * s6, 0.0, s6],
                vec![-1.0 / 8.0, 2.0 / 8.0, 0.0, -2.0 / 8.0, 1.0 / 8.0],
                vec![-1.0 / 16.0, 4.0 / 16.0, -6.0 / 16.0, 4.0 / 16.0, -1.0 / 16.0],
            ],
        )
    }

    fn tensor(kind: BankKind, taps: Vec<Vec<f64>>) -> Self {
        let mut kernels = Vec::with_capacity(taps.len() * taps.len());
        for a in &taps {
            for b in &taps {
                kernels.push(Array2::from_shape_fn((a.len(), b.len()), |(i, j)| a[i] * b[j]));
            }
        }
        Self { kind, taps, kernels }
    }

    /// Learned bank from `p x p` kernels. The caller is responsible for the
    /// orthogonality structure; see [`FilterBank::check_patch_tightness`].
    pub fn learned(kernels: Vec<Array2<f64>>) -> Result<Self> {
        let p = kernels.first().map(|k| k.nrows()).unwrap_or(0);
        if p == 0 || kernels.len() != p * p || kernels.iter().any(|k| k.dim() != (p, p)) {
            return param_err("a learned bank needs p^2 kernels of size p x p");
        }
        Ok(Self { kind: BankKind::Learned, taps: Vec::new(), kernels })
    }

    /// Learned bank from a `p^2 x p^2` orthogonal matrix (rows are filters).
    pub fn from_orthogonal(q: &Array2<f64>, p: usize) -> Result<Self> {
        if q.dim() != (p * p, p * p) {
            return dim_err(format!("expected a {0}x{0} matrix, got {1:?}", p * p, q.dim()));
        }
        let kernels = q
            .rows()
            .into_iter()
            .map(|row| Array2::from_shape_fn((p, p), |(i, j)| row[i * p + j] / p as f64))
            .collect();
        Self::learned(kernels)
    }

    /// Embeds a B-spline bank into `p x p` kernels and completes it to a
    /// patch-orthogonal learned bank by Gram-Schmidt against the canonical
    /// basis. The normalized B-spline kernels come first, so band 0 stays the
    /// low-pass filter.
    pub fn ddtf_init(base: &FilterBank, p: usize) -> Result<Self> {
        if base.kind == BankKind::Learned {
            if base.patch_size() != p {
                return param_err("learned init bank has the wrong patch size");
            }
            return Ok(base.clone());
        }
        if p < 2 {
            return param_err("patch size must be at least 2");
        }
        let dim = p * p;
        let mut candidates: Vec<Vec<f64>> = Vec::new();
        for k in &base.kernels {
            let (kr, kc) = k.dim();
            let mut v = vec![0.0; dim];
            let (or, oc) = ((p.saturating_sub(kr)) / 2, (p.saturating_sub(kc)) / 2);
            let cr = (kr.saturating_sub(p)) / 2;
            let cc = (kc.saturating_sub(p)) / 2;
            for i in 0..kr.min(p) {
                for j in 0..kc.min(p) {
                    v[(i + or) * p + j + oc] = k[[i + cr, j + cc]];
                }
            }
            candidates.push(v);
        }
        candidates.extend((0..dim).map(|i| {
            let mut e = vec![0.0; dim];
            e[i] = 1.0;
            e
        }));
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(dim);
        for mut v in candidates {
            if basis.len() == dim {
                break;
            }
            // two passes of modified Gram-Schmidt
            for _ in 0..2 {
                for b in &basis {
                    let proj: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                    v.iter_mut().zip(b).for_each(|(x, y)| *x -= proj * y);
                }
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-8 {
                v.iter_mut().for_each(|x| *x /= norm);
                basis.push(v);
            }
        }
        let q = Array2::from_shape_fn((dim, dim), |(i, j)| basis[i][j]);
        Self::from_orthogonal(&q, p)
    }

    pub fn kind(&self) -> BankKind {
        self.kind
    }

    pub fn kernels(&self) -> &[Array2<f64>] {
        &self.kernels
    }

    /// 1-D taps of a tensor-product bank (empty for learned banks).
    pub fn taps(&self) -> &[Vec<f64>] {
        &self.taps
    }

    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }

    /// Kernel support (rows) of the finest level.
    pub fn support(&self) -> usize {
        self.kernels.first().map(|k| k.nrows()).unwrap_or(0)
    }

    /// Side length of learned kernels.
    pub fn patch_size(&self) -> usize {
        self.support()
    }

    /// Filters flattened row-wise into an `m x p^2` matrix.
    pub fn matrix(&self) -> Array2<f64> {
        let p = self.support();
        let mut m = Array2::zeros((self.len(), p * p));
        for (mut row, k) in m.rows_mut().into_iter().zip(&self.kernels) {
            row.iter_mut().zip(k.iter()).for_each(|(r, v)| *r = *v);
        }
        m
    }

    /// `max |p^2 Q^T Q - I|` for a learned bank with flattened matrix `Q`.
    pub fn check_patch_tightness(&self) -> f64 {
        let q = self.matrix();
        let p2 = (self.support() * self.support()) as f64;
        let g = q.t().dot(&q) * p2;
        g.indexed_iter()
            .map(|((i, j), v)| (v - if i == j { 1.0 } else { 0.0 }).abs())
            .fold(0.0, f64::max)
    }

    /// Plain-text dump: a header line, optional `#` comment lines, then one
    /// block per kernel (`kernel <index> <rows> <cols>` followed by rows).
    pub fn to_text(&self, comments: &[String]) -> String {
        let mut out = format!("filterbank {} {}\n", self.kind.name(), self.len());
        for c in comments {
            let _ = writeln!(out, "# {c}");
        }
        for (i, k) in self.kernels.iter().enumerate() {
            let _ = writeln!(out, "kernel {i} {} {}", k.nrows(), k.ncols());
            for row in k.rows() {
                let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                let _ = writeln!(out, "{}", line.join(" "));
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
        let header = lines.next().ok_or_else(|| Error::Format("empty filter bank file".into()))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 3 || parts[0] != "filterbank" {
            return Err(Error::Format(format!("bad filter bank header '{header}'")));
        }
        let kind: BankKind = parts[1].parse()?;
        let count: usize = parse_num(parts[2])?;
        let mut kernels = Vec::with_capacity(count);
        for idx in 0..count {
            let head = lines.next().ok_or_else(|| Error::Format("truncated filter bank".into()))?;
            let h: Vec<&str> = head.split_whitespace().collect();
            if h.len() != 4 || h[0] != "kernel" || parse_num::<usize>(h[1])? != idx {
                return Err(Error::Format(format!("bad kernel header '{head}'")));
            }
            let (r, c): (usize, usize) = (parse_num(h[2])?, parse_num(h[3])?);
            let mut vals = Vec::with_capacity(r * c);
            for _ in 0..r {
                let line = lines.next().ok_or_else(|| Error::Format("truncated kernel".into()))?;
                for tok in line.split_whitespace() {
                    vals.push(parse_num::<f64>(tok)?);
                }
            }
            let k = Array2::from_shape_vec((r, c), vals)
                .map_err(|_| Error::Format(format!("kernel {idx} has the wrong number of values")))?;
            kernels.push(k);
        }
        let bank = match kind {
            BankKind::LinearBspline => FilterBank::linear_bspline(),
            BankKind::CubicBspline => FilterBank::cubic_bspline(),
            BankKind::Learned => return FilterBank::learned(kernels),
        };
        if bank.kernels != kernels {
            return Err(Error::Format(format!("{} kernels do not match the standard taps", kind.name())));
        }
        Ok(bank)
    }
}

fn parse_num<T: FromStr>(s: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Format(format!("cannot parse '{s}'")))
}

/// A filter bank together with its decomposition depth.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameletSystem {
    pub bank: FilterBank,
    pub levels: usize,
}

impl FrameletSystem {
    pub fn new(bank: FilterBank, levels: usize) -> Result<Self> {
        if levels == 0 {
            return param_err("a framelet system needs at least one level");
        }
        if bank.kind == BankKind::Learned && levels != 1 {
            return param_err("learned banks are single-level");
        }
        Ok(Self { bank, levels })
    }

    /// Cubic B-spline, 3 levels: the sinogram-side system.
    pub fn cubic3() -> Self {
        Self { bank: FilterBank::cubic_bspline(), levels: 3 }
    }

    /// Linear B-spline, 1 level: the image-side system.
    pub fn linear1() -> Self {
        Self { bank: FilterBank::linear_bspline(), levels: 1 }
    }

    pub fn bands_per_level(&self) -> usize {
        self.bank.len()
    }

    pub fn n_bands(&self) -> usize {
        self.levels * self.bank.len()
    }
}

/// Coefficient stack of an undecimated transform; every band has the shape
/// of the transformed array.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameletCoeffs {
    pub levels: usize,
    pub bands_per_level: usize,
    /// Shape `(levels * bands_per_level, rows, cols)`; band `(l, i)` lives at
    /// index `l * bands_per_level + i`.
    pub data: Array3<f64>,
}

impl FrameletCoeffs {
    pub fn zeros(levels: usize, bands_per_level: usize, shape: (usize, usize)) -> Self {
        Self { levels, bands_per_level, data: Array3::zeros((levels * bands_per_level, shape.0, shape.1)) }
    }

    pub fn zeros_like(other: &FrameletCoeffs) -> Self {
        Self::zeros(other.levels, other.bands_per_level, other.grid_shape())
    }

    pub fn grid_shape(&self) -> (usize, usize) {
        let (_, r, c) = self.data.dim();
        (r, c)
    }

    pub fn band(&self, level: usize, index: usize) -> ArrayView2<'_, f64> {
        self.data.index_axis(Axis(0), level * self.bands_per_level + index)
    }

    pub fn dot(&self, other: &FrameletCoeffs) -> f64 {
        Zip::from(&self.data).and(&other.data).fold(0.0, |acc, &a, &b| acc + a * b)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn same_layout(&self, other: &FrameletCoeffs) -> bool {
        self.levels == other.levels && self.bands_per_level == other.bands_per_level && self.data.dim() == other.data.dim()
    }

    pub(crate) fn check_layout(&self, other: &FrameletCoeffs) -> Result<()> {
        if !self.same_layout(other) {
            return dim_err("framelet coefficient layouts differ");
        }
        Ok(())
    }
}

/// Analysis operator `W`.
pub fn decompose(x: &Array2<f64>, sys: &FrameletSystem) -> Result<FrameletCoeffs> {
    let (rows, cols) = x.dim();
    let support = sys.bank.support();
    if rows < support || cols < support {
        return dim_err(format!("input {rows}x{cols} is smaller than the {support}-tap kernel"));
    }
    if sys.bank.kind == BankKind::Learned {
        return Ok(patch_analysis(x, &sys.bank));
    }
    let bpl = sys.bands_per_level();
    let mut out = FrameletCoeffs::zeros(sys.levels, bpl, (rows, cols));
    let mut low = x.clone();
    for level in 0..sys.levels {
        let bands = tensor_analysis(&low, &sys.bank.taps, 1 << level);
        let mut bands = bands.into_iter();
        let lp = bands.next().expect("low-pass band");
        for (i, b) in bands.enumerate() {
            out.data.index_axis_mut(Axis(0), level * bpl + i + 1).assign(&b);
        }
        if level + 1 == sys.levels {
            out.data.index_axis_mut(Axis(0), level * bpl).assign(&lp);
        } else {
            low = lp;
        }
    }
    Ok(out)
}

/// Synthesis operator `W^T`, the exact transpose of [`decompose`].
pub fn reconstruct(c: &FrameletCoeffs, sys: &FrameletSystem) -> Result<Array2<f64>> {
    if c.levels != sys.levels || c.bands_per_level != sys.bands_per_level() {
        return dim_err(format!(
            "coefficients have {}x{} bands, system expects {}x{}",
            c.levels,
            c.bands_per_level,
            sys.levels,
            sys.bands_per_level()
        ));
    }
    if sys.bank.kind == BankKind::Learned {
        return Ok(patch_synthesis(c, &sys.bank));
    }
    let bpl = sys.bands_per_level();
    let mut low = c.band(sys.levels - 1, 0).to_owned();
    for level in (0..sys.levels).rev() {
        let band = |i: usize| if i == 0 { low.view() } else { c.band(level, i) };
        low = tensor_synthesis(band, bpl, &sys.bank.taps, 1 << level, c.grid_shape());
    }
    Ok(low)
}

/// Half-sample symmetric reflection into `[0, n)` (period `2n`).
#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let p = 2 * n as isize;
    let m = i.rem_euclid(p) as usize;
    if m < n {
        m
    } else {
        2 * n - 1 - m
    }
}

fn offsets(len: usize, dil: usize, n: usize) -> Vec<Vec<usize>> {
    let half = (len / 2) as isize;
    (0..n)
        .map(|k| (0..len).map(|t| reflect(k as isize + (t as isize - half) * dil as isize, n)).collect())
        .collect()
}

/// `y[k] = sum_t a[t] x[reflect(k + (t - r) * dil)]` along `axis`.
fn filter_axis(x: ArrayView2<f64>, taps: &[f64], dil: usize, axis: Axis) -> Array2<f64> {
    let n = x.len_of(axis);
    let idx = offsets(taps.len(), dil, n);
    let mut out = Array2::zeros(x.dim());
    if axis == Axis(0) {
        for (k, mut row) in out.rows_mut().into_iter().enumerate() {
            for (t, &a) in taps.iter().enumerate() {
                if a != 0.0 {
                    row.scaled_add(a, &x.row(idx[k][t]));
                }
            }
        }
    } else {
        for (mut orow, xrow) in out.rows_mut().into_iter().zip(x.rows()) {
            let xs = xrow.to_vec();
            for (k, o) in orow.iter_mut().enumerate() {
                *o = taps.iter().zip(&idx[k]).map(|(a, &i)| a * xs[i]).sum();
            }
        }
    }
    out
}

/// Transpose of [`filter_axis`], accumulated into `acc`.
fn filter_axis_adjoint(y: ArrayView2<f64>, taps: &[f64], dil: usize, axis: Axis, acc: &mut Array2<f64>) {
    let n = y.len_of(axis);
    let idx = offsets(taps.len(), dil, n);
    if axis == Axis(0) {
        for (k, yrow) in y.rows().into_iter().enumerate() {
            for (t, &a) in taps.iter().enumerate() {
                if a != 0.0 {
                    acc.row_mut(idx[k][t]).scaled_add(a, &yrow);
                }
            }
        }
    } else {
        for (mut arow, yrow) in acc.rows_mut().into_iter().zip(y.rows()) {
            let mut buf = vec![0.0; n];
            for (k, &v) in yrow.iter().enumerate() {
                for (a, &i) in taps.iter().zip(&idx[k]) {
                    buf[i] += a * v;
                }
            }
            arow.iter_mut().zip(&buf).for_each(|(o, b)| *o += b);
        }
    }
}

fn tensor_analysis(x: &Array2<f64>, taps: &[Vec<f64>], dil: usize) -> Vec<Array2<f64>> {
    let horiz: Vec<Array2<f64>> = taps.iter().map(|a| filter_axis(x.view(), a, dil, Axis(1))).collect();
    let mut bands = Vec::with_capacity(taps.len() * taps.len());
    for a in taps {
        for h in &horiz {
            bands.push(filter_axis(h.view(), a, dil, Axis(0)));
        }
    }
    bands
}

fn tensor_synthesis<'a>(
    band: impl Fn(usize) -> ArrayView2<'a, f64>,
    bpl: usize,
    taps: &[Vec<f64>],
    dil: usize,
    shape: (usize, usize),
) -> Array2<f64> {
    let r = taps.len();
    debug_assert_eq!(r * r, bpl);
    let mut out = Array2::zeros(shape);
    for (i2, b) in taps.iter().enumerate() {
        let mut col_acc = Array2::zeros(shape);
        for (i1, a) in taps.iter().enumerate() {
            filter_axis_adjoint(band(i1 * r + i2), a, dil, Axis(0), &mut col_acc);
        }
        filter_axis_adjoint(col_acc.view(), b, dil, Axis(1), &mut out);
    }
    out
}

/// Stride-1 periodic patch matrix: row `a * p + b`, column `y * W + x` holds
/// `x[(y + a) mod H, (x + b) mod W]`.
pub(crate) fn patch_matrix(x: &Array2<f64>, p: usize) -> Array2<f64> {
    let (h, w) = x.dim();
    let mut out = Array2::zeros((p * p, h * w));
    for a in 0..p {
        for b in 0..p {
            let mut row = out.row_mut(a * p + b);
            let dst = row.as_slice_mut().expect("contiguous row");
            for y in 0..h {
                let src = x.row((y + a) % h);
                let line = &mut dst[y * w..(y + 1) * w];
                for (xx, d) in line.iter_mut().enumerate() {
                    *d = src[(xx + b) % w];
                }
            }
        }
    }
    out
}

/// Transpose of [`patch_matrix`]: scatter-adds patch entries back onto the grid.
pub(crate) fn patch_matrix_adjoint(z: &Array2<f64>, p: usize, shape: (usize, usize)) -> Array2<f64> {
    let (h, w) = shape;
    let mut out = Array2::zeros(shape);
    for a in 0..p {
        for b in 0..p {
            let row = z.row(a * p + b);
            let src = row.as_slice().expect("contiguous row");
            for y in 0..h {
                let mut dst = out.row_mut((y + a) % h);
                let line = &src[y * w..(y + 1) * w];
                for (xx, v) in line.iter().enumerate() {
                    dst[(xx + b) % w] += v;
                }
            }
        }
    }
    out
}

fn patch_analysis(x: &Array2<f64>, bank: &FilterBank) -> FrameletCoeffs {
    let (h, w) = x.dim();
    let p = bank.patch_size();
    let coeffs = bank.matrix().dot(&patch_matrix(x, p));
    let data = coeffs.into_shape_with_order((p * p, h, w)).expect("band layout");
    FrameletCoeffs { levels: 1, bands_per_level: p * p, data }
}

fn patch_synthesis(c: &FrameletCoeffs, bank: &FilterBank) -> Array2<f64> {
    let (h, w) = c.grid_shape();
    let p = bank.patch_size();
    let flat = c.data.view().into_shape_with_order((p * p, h * w)).expect("band layout");
    let z = bank.matrix().t().dot(&flat);
    patch_matrix_adjoint(&z, p, (h, w))
}

/// Sum over pixels and levels of the Euclidean norm of the high-pass bands.
pub fn isotropic_l1(c: &FrameletCoeffs) -> f64 {
    let (rows, cols) = c.grid_shape();
    let mut total = 0.0;
    for level in 0..c.levels {
        let mut sq = Array2::<f64>::zeros((rows, cols));
        for i in 1..c.bands_per_level {
            Zip::from(&mut sq).and(&c.band(level, i)).for_each(|s, &v| *s += v * v);
        }
        total += sq.iter().map(|v| v.sqrt()).sum::<f64>();
    }
    total
}

/// Group shrinkage of the high-pass bands; low-pass bands pass through.
pub fn soft_threshold(c: &FrameletCoeffs, alpha: f64) -> Result<FrameletCoeffs> {
    let mut out = c.clone();
    soft_threshold_in_place(&mut out, alpha)?;
    Ok(out)
}

pub fn soft_threshold_in_place(c: &mut FrameletCoeffs, alpha: f64) -> Result<()> {
    if !(alpha >= 0.0) {
        return param_err(format!("threshold must be non-negative, got {alpha}"));
    }
    if alpha == 0.0 {
        return Ok(());
    }
    let (rows, cols) = c.grid_shape();
    let bpl = c.bands_per_level;
    for level in 0..c.levels {
        let mut scale = Array2::<f64>::zeros((rows, cols));
        for i in 1..bpl {
            Zip::from(&mut scale).and(&c.band(level, i)).for_each(|s, &v| *s += v * v);
        }
        scale.mapv_inplace(|r2| {
            let r = r2.sqrt();
            if r > alpha {
                (r - alpha) / r
            } else {
                0.0
            }
        });
        let mut bands = c.data.slice_mut(s![level * bpl + 1..(level + 1) * bpl, .., ..]);
        for mut b in bands.outer_iter_mut() {
            b *= &scale;
        }
    }
    Ok(())
}

/// Keep-or-kill thresholding of every coefficient, low-pass included.
pub fn hard_threshold(c: &FrameletCoeffs, lambda: f64) -> Result<FrameletCoeffs> {
    if !(lambda >= 0.0) {
        return param_err(format!("threshold must be non-negative, got {lambda}"));
    }
    let mut out = c.clone();
    out.data.mapv_inplace(|v| if v.abs() >= lambda { v } else { 0.0 });
    Ok(out)
}

/// Median-absolute-deviation estimate of the per-pixel noise level, read off
/// the finest diagonal band of the linear B-spline framelet (white-noise gain
/// 3/8).
pub fn mad_noise_sigma(x: &Array2<f64>) -> f64 {
    let (rows, cols) = x.dim();
    if rows < 3 || cols < 3 {
        return 0.0;
    }
    let taps = &FilterBank::linear_bspline().taps;
    let h = filter_axis(x.view(), &taps[2], 1, Axis(1));
    let hh = filter_axis(h.view(), &taps[2], 1, Axis(0));
    let mut mags: Vec<f64> = hh.iter().map(|v| v.abs()).collect();
    let mid = mags.len() / 2;
    let (_, median, _) = mags.select_nth_unstable_by(mid, f64::total_cmp);
    *median / 0.6745 / 0.375
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn pseudo_random(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        Array2::from_shape_fn((rows, cols), |_| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        })
    }

    fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
        Zip::from(a).and(b).fold(0.0, |m, x, y| f64::max(m, (x - y).abs()))
    }

    #[test]
    fn one_dimensional_filters_satisfy_uep_sums() {
        for bank in [FilterBank::linear_bspline(), FilterBank::cubic_bspline()] {
            let taps = bank.taps();
            assert!((taps[0].iter().sum::<f64>() - 1.0).abs() < 1e-15);
            for t in &taps[1..] {
                assert!(t.iter().sum::<f64>().abs() < 1e-15);
            }
        }
    }

    #[test]
    fn zero_and_constant_inputs() {
        let sys = FrameletSystem::cubic3();
        let c = decompose(&Array2::zeros((20, 24)), &sys).unwrap();
        assert_eq!(c.norm(), 0.0);
        let c = decompose(&Array2::from_elem((20, 24), 0.7), &sys).unwrap();
        for l in 0..3 {
            for i in 1..sys.bands_per_level() {
                assert!(c.band(l, i).iter().all(|v| v.abs() < 1e-13));
            }
        }
        assert!(c.band(2, 0).iter().all(|v| (v - 0.7).abs() < 1e-13));
        let z = reconstruct(&FrameletCoeffs::zeros(3, 25, (20, 24)), &sys).unwrap();
        assert_eq!(z.iter().map(|v| v.abs()).sum::<f64>(), 0.0);
    }

    #[test]
    fn perfect_reconstruction_all_banks_and_levels() {
        let x = pseudo_random(37, 29, 7);
        for bank in [FilterBank::linear_bspline(), FilterBank::cubic_bspline()] {
            for levels in 1..=3 {
                let sys = FrameletSystem::new(bank.clone(), levels).unwrap();
                let c = decompose(&x, &sys).unwrap();
                assert_eq!(c.data.dim().0, levels * bank.len());
                let back = reconstruct(&c, &sys).unwrap();
                assert!(max_abs_diff(&back, &x) < 1e-12, "{:?} L={levels}", bank.kind());
                let energy = (c.norm() - x.iter().map(|v| v * v).sum::<f64>().sqrt()).abs();
                assert!(energy < 1e-10);
            }
        }
    }

    #[test]
    fn explicit_matrix_is_isometry_at_tiny_size() {
        // Build W column by column on a 6x5 grid and check W^T W = I entrywise.
        let sys = FrameletSystem::new(FilterBank::cubic_bspline(), 2).unwrap();
        let (r, c) = (6, 5);
        let cols: Vec<Vec<f64>> = (0..r * c)
            .map(|k| {
                let mut e = Array2::zeros((r, c));
                e[[k / c, k % c]] = 1.0;
                decompose(&e, &sys).unwrap().data.iter().copied().collect()
            })
            .collect();
        for i in 0..r * c {
            for j in 0..r * c {
                let g: f64 = cols[i].iter().zip(&cols[j]).map(|(a, b)| a * b).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g - want).abs() < 1e-12, "G[{i},{j}] = {g}");
            }
        }
    }

    #[test]
    fn adjointness() {
        let x = pseudo_random(24, 30, 3);
        for sys in [FrameletSystem::linear1(), FrameletSystem::cubic3()] {
            let wx = decompose(&x, &sys).unwrap();
            let mut c = FrameletCoeffs::zeros_like(&wx);
            let noise = pseudo_random(c.data.len(), 1, 11);
            c.data.iter_mut().zip(noise.iter()).for_each(|(d, n)| *d = *n);
            let lhs = wx.dot(&c);
            let wtc = reconstruct(&c, &sys).unwrap();
            let rhs: f64 = x.iter().zip(wtc.iter()).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0), "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn small_input_rejected() {
        assert!(decompose(&Array2::zeros((4, 10)), &FrameletSystem::cubic3()).is_err());
        let c = FrameletCoeffs::zeros(1, 9, (8, 8));
        assert!(reconstruct(&c, &FrameletSystem::cubic3()).is_err());
    }

    #[test]
    fn isotropic_norm_hand_values() {
        let mut c = FrameletCoeffs::zeros(1, 3, (2, 2));
        assert_eq!(isotropic_l1(&c), 0.0);
        c.data[[0, 1, 1]] = 9.0; // low-pass is excluded
        c.data[[1, 0, 1]] = 3.0;
        c.data[[2, 0, 1]] = 4.0;
        assert_eq!(isotropic_l1(&c), 5.0);
        let mut scaled = c.clone();
        scaled.data *= -2.5;
        assert!((isotropic_l1(&scaled) - 12.5).abs() < 1e-12);
    }

    #[test]
    fn soft_threshold_hand_values() {
        let mut c = FrameletCoeffs::zeros(1, 3, (1, 1));
        c.data[[0, 0, 0]] = 1.7;
        c.data[[1, 0, 0]] = 3.0;
        c.data[[2, 0, 0]] = 4.0;
        let t = soft_threshold(&c, 2.5).unwrap();
        assert!((t.data[[1, 0, 0]] - 1.5).abs() < 1e-15);
        assert!((t.data[[2, 0, 0]] - 2.0).abs() < 1e-15);
        assert_eq!(t.data[[0, 0, 0]], 1.7);
        let t = soft_threshold(&c, 5.0).unwrap();
        assert_eq!((t.data[[1, 0, 0]], t.data[[2, 0, 0]], t.data[[0, 0, 0]]), (0.0, 0.0, 1.7));
        assert_eq!(soft_threshold(&c, 0.0).unwrap(), c);
        assert!(soft_threshold(&c, -1.0).is_err());
    }

    #[test]
    fn soft_threshold_zero_group_stays_zero() {
        let c = FrameletCoeffs::zeros(2, 4, (3, 3));
        let t = soft_threshold(&c, 0.3).unwrap();
        assert!(t.data.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn hard_threshold_hand_values() {
        let mut c = FrameletCoeffs::zeros(1, 3, (1, 1));
        c.data[[0, 0, 0]] = -3.0;
        c.data[[1, 0, 0]] = 1.0;
        c.data[[2, 0, 0]] = 2.0;
        let t = hard_threshold(&c, 2.0).unwrap();
        assert_eq!(t.data.iter().copied().collect::<Vec<_>>(), vec![-3.0, 0.0, 2.0]);
        assert_eq!(hard_threshold(&c, 0.0).unwrap(), c);
        assert!(hard_threshold(&c, 3.5).unwrap().data.iter().all(|v| *v == 0.0));
        assert!(hard_threshold(&c, -0.1).is_err());
    }

    #[test]
    fn ddtf_init_is_patch_tight_with_lowpass_first() {
        for base in [FilterBank::linear_bspline(), FilterBank::cubic_bspline()] {
            let bank = FilterBank::ddtf_init(&base, 8).unwrap();
            assert_eq!(bank.len(), 64);
            assert!(bank.check_patch_tightness() < 1e-12);
            assert!(bank.kernels()[0].sum() > 0.0);
            let dc = bank.kernels()[0].sum();
            assert!(bank.kernels()[1..].iter().all(|k| k.sum().abs() < dc));
        }
    }

    #[test]
    fn learned_patch_transform_is_tight() {
        let bank = FilterBank::ddtf_init(&FilterBank::cubic_bspline(), 6).unwrap();
        let sys = FrameletSystem::new(bank, 1).unwrap();
        let x = pseudo_random(17, 23, 5);
        let c = decompose(&x, &sys).unwrap();
        let back = reconstruct(&c, &sys).unwrap();
        assert!(max_abs_diff(&back, &x) < 1e-12);
        assert!(FrameletSystem::new(sys.bank.clone(), 2).is_err());
    }

    #[test]
    fn text_round_trip() {
        let bank = FilterBank::ddtf_init(&FilterBank::linear_bspline(), 4).unwrap();
        let text = bank.to_text(&["source abc".into()]);
        assert_eq!(FilterBank::from_text(&text).unwrap(), bank);
        let cubic = FilterBank::cubic_bspline();
        assert_eq!(FilterBank::from_text(&cubic.to_text(&[])).unwrap(), cubic);
        assert!(FilterBank::from_text("filterbank learned 2\nkernel 0 1 1\n0.5\n").is_err());
    }

    #[test]
    fn mad_estimate_tracks_white_noise() {
        let x = pseudo_random(128, 128, 9) * (12f64).sqrt() * 0.1; // std 0.1
        let sigma = mad_noise_sigma(&x);
        assert!((sigma - 0.1).abs() < 0.02, "{sigma}");
    }
}
