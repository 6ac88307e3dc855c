//! Potentials: convex weakly smooth parts `U`, smooth strongly convex
//! regularizers `ψ`, and their sum `Ū = U + ψ`.
//!
//! A weakly smooth potential carries a Hölder certificate `(L, α)`:
//! `‖∇U(x) − ∇U(y)‖ ≤ L‖x − y‖^α`. At kinks every shipped potential returns
//! the minimum-norm subgradient.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Energy and subgradient oracle on ℝ^d.
///
/// The `_into` form is unchecked and meant for hot loops; use the checked
/// helpers on [`CompositePotential`] at API boundaries.
pub trait Potential: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    /// Writes an element of ∂U(x) into `out` (overwrites).
    fn subgrad_into(&self, x: &[f64], out: &mut [f64]);
}

/// Hölder certificate `(L, α)` of a subgradient map.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Holder {
    #[serde(rename = "L")]
    pub l: f64,
    pub alpha: f64,
}

impl Holder {
    pub fn new(l: f64, alpha: f64) -> Result<Self> {
        if !(l >= 0.0 && l.is_finite()) {
            return Err(Error::InvalidArgument(format!("Hölder constant L must be finite and >= 0, got {l}")));
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidArgument(format!("Hölder exponent must lie in [0, 1], got {alpha}")));
        }
        Ok(Self { l, alpha })
    }
}

/// Convex potential with a declared Hölder certificate.
pub trait WeaklySmooth: Potential + fmt::Debug {
    fn holder(&self) -> Holder;
    fn name(&self) -> &'static str;

    /// Writes the minimum-norm element of `offset + ∂U(x)` into `out`.
    ///
    /// The default adds `offset` to [`Potential::subgrad_into`], which is
    /// exact wherever `U` is differentiable; potentials with kinks override it.
    fn min_norm_shifted(&self, x: &[f64], offset: &[f64], out: &mut [f64]) {
        self.subgrad_into(x, out);
        for (o, s) in out.iter_mut().zip(offset) {
            *o += s;
        }
    }
}

/// Minimum-norm element of `s + [−w, w]`.
fn shrink(s: f64, w: f64) -> f64 {
    s - s.clamp(-w, w)
}

fn sign0(t: f64) -> f64 {
    if t > 0.0 {
        1.0
    } else if t < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `U ≡ 0`, certificate `(0, 1)`.
#[derive(Clone, Debug)]
pub struct Zero {
    dim: usize,
}

impl Zero {
    pub fn new(dim: usize) -> Result<Self> {
        nonzero_dim(dim)?;
        Ok(Self { dim })
    }
}

impl Potential for Zero {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, _x: &[f64]) -> f64 {
        0.0
    }
    fn subgrad_into(&self, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
}

impl WeaklySmooth for Zero {
    fn holder(&self) -> Holder {
        Holder { l: 0.0, alpha: 1.0 }
    }
    fn name(&self) -> &'static str {
        "zero"
    }
}

/// `U(x) = w·Σ|xᵢ|`. Subgradient `w·sign(x)` with `sign(0) = 0`;
/// certificate `(2w√d, 0)`.
#[derive(Clone, Debug)]
pub struct AbsSum {
    dim: usize,
    weight: f64,
}

impl AbsSum {
    pub fn new(dim: usize, weight: f64) -> Result<Self> {
        nonzero_dim(dim)?;
        nonneg("weight", weight)?;
        Ok(Self { dim, weight })
    }
}

impl Potential for AbsSum {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.weight * x.iter().map(|v| v.abs()).sum::<f64>()
    }
    fn subgrad_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, &v) in out.iter_mut().zip(x) {
            *o = self.weight * sign0(v);
        }
    }
}

impl WeaklySmooth for AbsSum {
    fn holder(&self) -> Holder {
        Holder { l: 2.0 * self.weight * (self.dim as f64).sqrt(), alpha: 0.0 }
    }
    fn name(&self) -> &'static str {
        "abs"
    }
    fn min_norm_shifted(&self, x: &[f64], offset: &[f64], out: &mut [f64]) {
        for ((o, &v), &s) in out.iter_mut().zip(x).zip(offset) {
            *o = if v == 0.0 { shrink(s, self.weight) } else { s + self.weight * sign0(v) };
        }
    }
}

/// `U(x) = w·‖x‖₂`. Subgradient `w·x/‖x‖`, zero at the origin;
/// certificate `(2w, 0)`.
#[derive(Clone, Debug)]
pub struct EuclideanNorm {
    dim: usize,
    weight: f64,
}

impl EuclideanNorm {
    pub fn new(dim: usize, weight: f64) -> Result<Self> {
        nonzero_dim(dim)?;
        nonneg("weight", weight)?;
        Ok(Self { dim, weight })
    }
}

impl Potential for EuclideanNorm {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.weight * norm(x)
    }
    fn subgrad_into(&self, x: &[f64], out: &mut [f64]) {
        let n = norm(x);
        if n == 0.0 {
            out.fill(0.0);
        } else {
            for (o, &v) in out.iter_mut().zip(x) {
                *o = self.weight * v / n;
            }
        }
    }
}

impl WeaklySmooth for EuclideanNorm {
    fn holder(&self) -> Holder {
        Holder { l: 2.0 * self.weight, alpha: 0.0 }
    }
    fn name(&self) -> &'static str {
        "euclidean_norm"
    }
    fn min_norm_shifted(&self, x: &[f64], offset: &[f64], out: &mut [f64]) {
        if norm(x) > 0.0 {
            self.subgrad_into(x, out);
            for (o, s) in out.iter_mut().zip(offset) {
                *o += s;
            }
            return;
        }
        let n = norm(offset);
        let keep = if n > self.weight { 1.0 - self.weight / n } else { 0.0 };
        for (o, s) in out.iter_mut().zip(offset) {
            *o = keep * s;
        }
    }
}

/// `U(x) = (a/2)‖x − c‖²`, certificate `(a, 1)`.
#[derive(Clone, Debug)]
pub struct Quadratic {
    a: f64,
    center: Vec<f64>,
}

impl Quadratic {
    pub fn new(a: f64, center: Vec<f64>) -> Result<Self> {
        nonzero_dim(center.len())?;
        nonneg("a", a)?;
        Ok(Self { a, center })
    }
}

impl Potential for Quadratic {
    fn dim(&self) -> usize {
        self.center.len()
    }
    fn value(&self, x: &[f64]) -> f64 {
        let s: f64 = x.iter().zip(&self.center).map(|(v, c)| (v - c) * (v - c)).sum();
        0.5 * self.a * s
    }
    fn subgrad_into(&self, x: &[f64], out: &mut [f64]) {
        for ((o, &v), &c) in out.iter_mut().zip(x).zip(&self.center) {
            *o = self.a * (v - c);
        }
    }
}

impl WeaklySmooth for Quadratic {
    fn holder(&self) -> Holder {
        Holder { l: self.a, alpha: 1.0 }
    }
    fn name(&self) -> &'static str {
        "quadratic"
    }
}

/// Bridge penalty `U(x) = γ·Σ|xᵢ|^{1+α}`.
///
/// Gradient `γ(1+α)·sign(xᵢ)|xᵢ|^α`. With `c_α` the scalar Hölder constant of
/// `t ↦ sign(t)|t|^α`, the certificate is `(γ(1+α)c_α·d^{(1−α)/2}, α)`.
#[derive(Clone, Debug)]
pub struct BridgePenalty {
    dim: usize,
    gamma: f64,
    alpha: f64,
    c_alpha: f64,
}

impl BridgePenalty {
    pub fn new(dim: usize, gamma: f64, alpha: f64) -> Result<Self> {
        nonzero_dim(dim)?;
        nonneg("gamma", gamma)?;
        Holder::new(0.0, alpha)?;
        Ok(Self { dim, gamma, alpha, c_alpha: scalar_holder_constant(alpha) })
    }

    pub fn c_alpha(&self) -> f64 {
        self.c_alpha
    }

    fn slope(&self, t: f64) -> f64 {
        if t == 0.0 {
            0.0
        } else if self.alpha == 1.0 {
            t
        } else {
            sign0(t) * t.abs().powf(self.alpha)
        }
    }
}

impl Potential for BridgePenalty {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> f64 {
        let p = 1.0 + self.alpha;
        self.gamma * x.iter().map(|v| v.abs().powf(p)).sum::<f64>()
    }
    fn subgrad_into(&self, x: &[f64], out: &mut [f64]) {
        let k = self.gamma * (1.0 + self.alpha);
        for (o, &v) in out.iter_mut().zip(x) {
            *o = k * self.slope(v);
        }
    }
}

impl WeaklySmooth for BridgePenalty {
    fn holder(&self) -> Holder {
        let d = self.dim as f64;
        Holder {
            l: self.gamma * (1.0 + self.alpha) * self.c_alpha * d.powf((1.0 - self.alpha) / 2.0),
            alpha: self.alpha,
        }
    }
    fn name(&self) -> &'static str {
        "bridge"
    }
    fn min_norm_shifted(&self, x: &[f64], offset: &[f64], out: &mut [f64]) {
        self.subgrad_into(x, out);
        for ((o, &v), &s) in out.iter_mut().zip(x).zip(offset) {
            *o = if v == 0.0 && self.alpha == 0.0 { shrink(s, self.gamma) } else { *o + s };
        }
    }
}

/// Numerical Hölder constant of `s(t) = sign(t)|t|^α` on ℝ.
///
/// The ratio `|s(t) − s(u)|/|t − u|^α` is scale invariant, so it suffices to
/// fix `t = 1` and scan `u = ±r` over a log grid of `r ∈ [1e-6, 1e6]`
/// (which contains `r = 1`), plus `u = 0`.
pub fn scalar_holder_constant(alpha: f64) -> f64 {
    let s = |t: f64| sign0(t) * t.abs().powf(alpha);
    let ratio = |u: f64| {
        let gap = (1.0 - u).abs();
        if gap == 0.0 {
            0.0
        } else {
            (s(1.0) - s(u)).abs() / gap.powf(alpha)
        }
    };
    const HALF: i32 = 3000;
    let mut best = ratio(0.0);
    for i in -HALF..=HALF {
        let r = 10f64.powf(6.0 * f64::from(i) / f64::from(HALF));
        best = best.max(ratio(r)).max(ratio(-r));
    }
    best
}

/// Dense row-major matrix used for least-squares data.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if n == 0 || d == 0 {
            return Err(Error::InvalidArgument("empty matrix".into()));
        }
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidArgument("ragged matrix rows".into()));
        }
        Ok(Self { rows: n, cols: d, data: rows.concat() })
    }

    pub fn identity(d: usize) -> Self {
        let mut data = vec![0.0; d * d];
        for i in 0..d {
            data[i * d + i] = 1.0;
        }
        Self { rows: d, cols: d, data }
    }

    /// Comma-separated, one row per line, no header. Blank lines are skipped.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .map(|f| {
                    f.trim().parse::<f64>().map_err(|e| {
                        Error::InvalidArgument(format!("line {}: cannot parse {f:?}: {e}", lineno + 1))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        Self::from_rows(&rows)
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        Self::from_csv_str(&std::fs::read_to_string(path)?)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Largest eigenvalue of `AᵀA`.
    pub fn gram_spectral_norm(&self) -> f64 {
        let a = nalgebra::DMatrix::from_row_slice(self.rows, self.cols, &self.data);
        let g = a.transpose() * &a;
        g.symmetric_eigenvalues().iter().fold(0.0f64, |m, &v| m.max(v))
    }
}

#[derive(Clone, Debug)]
struct LeastSquares {
    a: DenseMatrix,
    b: Vec<f64>,
}

impl LeastSquares {
    fn residual(&self, x: &[f64], i: usize) -> f64 {
        self.a.row(i).iter().zip(x).map(|(a, v)| a * v).sum::<f64>() - self.b[i]
    }
}

/// Smooth strongly convex regularizer
/// `ψ(x) = ½Σᵢ sᵢ(xᵢ − x′ᵢ)² [+ ‖Ax − b‖²]`.
///
/// `λ = min sᵢ`; `m = max sᵢ + 2·λ_max(AᵀA)`. The least-squares part only
/// enters through bridge posteriors and never contributes to `λ`.
#[derive(Clone, Debug)]
pub struct Regularizer {
    curvature: Vec<f64>,
    center: Vec<f64>,
    least_squares: Option<LeastSquares>,
    m: f64,
    lambda: f64,
}

impl Regularizer {
    /// `ψ(x) = (λ/2)‖x − x′‖²`, with `m = λ`.
    pub fn quadratic(lambda: f64, center: Vec<f64>) -> Result<Self> {
        let d = center.len();
        Self::diagonal(vec![lambda; d], center)
    }

    /// `ψ(x) = ½Σ sᵢ(xᵢ − x′ᵢ)²` with per-axis curvatures `sᵢ > 0`.
    pub fn diagonal(curvature: Vec<f64>, center: Vec<f64>) -> Result<Self> {
        nonzero_dim(center.len())?;
        check_dim(center.len(), curvature.len())?;
        if curvature.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidArgument("regularizer curvatures must be finite and > 0".into()));
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("regularizer center must be finite".into()));
        }
        let m = curvature.iter().copied().fold(f64::MIN, f64::max);
        let lambda = curvature.iter().copied().fold(f64::MAX, f64::min);
        Ok(Self { curvature, center, least_squares: None, m, lambda })
    }

    fn with_least_squares(mut self, a: DenseMatrix, b: Vec<f64>) -> Self {
        self.m += 2.0 * a.gram_spectral_norm();
        self.least_squares = Some(LeastSquares { a, b });
        self
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn smooth_m(&self) -> f64 {
        self.m
    }

    pub fn strong_lambda(&self) -> f64 {
        self.lambda
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let mut v = 0.0;
        for ((&xi, &c), &s) in x.iter().zip(&self.center).zip(&self.curvature) {
            v += s * (xi - c) * (xi - c);
        }
        v *= 0.5;
        if let Some(ls) = &self.least_squares {
            for i in 0..ls.a.rows() {
                let r = ls.residual(x, i);
                v += r * r;
            }
        }
        v
    }

    /// Adds `∇ψ(x)` to `out`.
    pub fn add_grad(&self, x: &[f64], out: &mut [f64]) {
        for (((o, &xi), &c), &s) in out.iter_mut().zip(x).zip(&self.center).zip(&self.curvature) {
            *o += s * (xi - c);
        }
        if let Some(ls) = &self.least_squares {
            for i in 0..ls.a.rows() {
                let r2 = 2.0 * ls.residual(x, i);
                for (o, a) in out.iter_mut().zip(ls.a.row(i)) {
                    *o += r2 * a;
                }
            }
        }
    }

    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        self.add_grad(x, &mut g);
        g
    }
}

/// `Ū = U + ψ`.
#[derive(Clone, Debug)]
pub struct CompositePotential {
    base: Arc<dyn WeaklySmooth>,
    reg: Regularizer,
    minimizer_hint: Option<Vec<f64>>,
}

impl CompositePotential {
    pub fn new(base: Arc<dyn WeaklySmooth>, reg: Regularizer) -> Result<Self> {
        check_dim(base.dim(), reg.dim())?;
        Ok(Self { base, reg, minimizer_hint: None })
    }

    pub fn with_minimizer_hint(mut self, x: Vec<f64>) -> Result<Self> {
        check_dim(self.dim(), x.len())?;
        self.minimizer_hint = Some(x);
        Ok(self)
    }

    pub fn minimizer_hint(&self) -> Option<&[f64]> {
        self.minimizer_hint.as_deref()
    }

    pub fn base(&self) -> &dyn WeaklySmooth {
        self.base.as_ref()
    }

    pub fn regularizer(&self) -> &Regularizer {
        &self.reg
    }

    /// Certificate `(L, α)` of the weakly smooth part.
    pub fn holder(&self) -> Holder {
        self.base.holder()
    }

    pub fn smooth_m(&self) -> f64 {
        self.reg.smooth_m()
    }

    pub fn strong_lambda(&self) -> f64 {
        self.reg.strong_lambda()
    }

    /// `‖min-norm element of ∂Ū(x)‖`; zero exactly at the minimizer.
    pub fn stationarity(&self, x: &[f64]) -> f64 {
        let grad_psi = self.reg.grad(x);
        let mut g = vec![0.0; x.len()];
        self.base.min_norm_shifted(x, &grad_psi, &mut g);
        norm(&g)
    }

    /// Checked `Ū(x)`.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        Ok(self.value(x))
    }

    /// Checked element of `∂Ū(x)`.
    pub fn subgrad(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        let mut g = vec![0.0; x.len()];
        self.subgrad_into(x, &mut g);
        Ok(g)
    }
}

impl Potential for CompositePotential {
    fn dim(&self) -> usize {
        self.reg.dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.base.value(x) + self.reg.value(x)
    }
    fn subgrad_into(&self, x: &[f64], out: &mut [f64]) {
        self.base.subgrad_into(x, out);
        self.reg.add_grad(x, out);
    }
}

/// Bayesian bridge regression posterior
/// `Ū(x) = ‖Ax − b‖² + γΣ|xᵢ|^{1+α} + ψ(x)`.
///
/// The penalty carries the certificate; `‖Ax − b‖²` is folded into the
/// regularizer's smoothness `m`. With `γ = 0` the weakly smooth part is
/// [`Zero`], whose certificate has `α = 1`.
pub fn make_bridge_posterior(
    a: DenseMatrix,
    b: Vec<f64>,
    gamma: f64,
    alpha: f64,
    reg: Regularizer,
) -> Result<CompositePotential> {
    check_dim(a.rows(), b.len())?;
    check_dim(reg.dim(), a.cols())?;
    if gamma < 0.0 || !gamma.is_finite() {
        return Err(Error::InvalidArgument(format!("gamma must be finite and >= 0, got {gamma}")));
    }
    let d = a.cols();
    let base: Arc<dyn WeaklySmooth> = if gamma == 0.0 {
        Arc::new(Zero::new(d)?)
    } else {
        Arc::new(BridgePenalty::new(d, gamma, alpha)?)
    };
    CompositePotential::new(base, reg.with_least_squares(a, b))
}

/// Outcome of [`verify_certificate`].
#[derive(Clone, Debug, Serialize)]
pub struct CertificateReport {
    pub declared: Holder,
    pub max_ratio: f64,
    pub worst_violation: f64,
    pub n_pairs: usize,
    pub tol: f64,
    pub pass: bool,
}

/// Samples pairs in the cube `[−radius, radius]^d` and checks the Hölder
/// inequality and the subgradient inequality.
///
/// Pairs cycle through three shapes: independent points, a point and a small
/// perturbation of it, and mirror images `(x, −x)` that straddle kinks at the
/// origin. The subgradient-inequality violation is measured relative to
/// `max(1, |U(x)|, |U(y)|)`.
pub fn verify_certificate<R: Rng + ?Sized>(
    pot: &dyn WeaklySmooth,
    n_pairs: usize,
    radius: f64,
    tol: f64,
    rng: &mut R,
) -> CertificateReport {
    let d = pot.dim();
    let h = pot.holder();
    let mut x = vec![0.0; d];
    let mut y = vec![0.0; d];
    let mut gx = vec![0.0; d];
    let mut gy = vec![0.0; d];
    let mut max_ratio = 0.0f64;
    let mut worst = 0.0f64;
    for p in 0..n_pairs.max(1) {
        for v in x.iter_mut() {
            *v = rng.random_range(-radius..=radius);
        }
        match p % 3 {
            0 => {
                for v in y.iter_mut() {
                    *v = rng.random_range(-radius..=radius);
                }
            }
            1 => {
                let scale = radius * 10f64.powf(rng.random_range(-4.0..0.0));
                for (yv, xv) in y.iter_mut().zip(&x) {
                    *yv = xv + scale * rng.random_range(-1.0..=1.0);
                }
            }
            _ => {
                for (yv, xv) in y.iter_mut().zip(&x) {
                    *yv = -xv;
                }
            }
        }
        pot.subgrad_into(&x, &mut gx);
        pot.subgrad_into(&y, &mut gy);
        let dist = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if dist > 0.0 {
            let gdiff = gx.iter().zip(&gy).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            max_ratio = max_ratio.max(gdiff / dist.powf(h.alpha));
        }
        let ux = pot.value(&x);
        let uy = pot.value(&y);
        let lin_x: f64 = gx.iter().zip(y.iter().zip(&x)).map(|(g, (b, a))| g * (b - a)).sum();
        let lin_y: f64 = gy.iter().zip(x.iter().zip(&y)).map(|(g, (b, a))| g * (b - a)).sum();
        let scale = 1f64.max(ux.abs()).max(uy.abs());
        worst = worst.max((ux + lin_x - uy) / scale).max((uy + lin_y - ux) / scale);
    }
    let pass = max_ratio <= h.l * (1.0 + tol) && worst <= tol;
    CertificateReport { declared: h, max_ratio, worst_violation: worst, n_pairs, tol, pass }
}

fn nonzero_dim(d: usize) -> Result<()> {
    if d == 0 {
        Err(Error::InvalidArgument("dimension must be >= 1".into()))
    } else {
        Ok(())
    }
}

fn nonneg(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be finite and >= 0, got {v}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn abs_plus_half_square() -> CompositePotential {
        CompositePotential::new(Arc::new(AbsSum::new(1, 1.0).unwrap()), Regularizer::quadratic(1.0, vec![0.0]).unwrap())
            .unwrap()
    }

    #[test]
    fn eval_examples() {
        let q = CompositePotential::new(Arc::new(Zero::new(2).unwrap()), Regularizer::quadratic(1.0, vec![0.0; 2]).unwrap())
            .unwrap();
        assert_eq!(q.eval(&[3.0, 4.0]).unwrap(), 12.5);
        let p = abs_plus_half_square();
        assert_eq!(p.eval(&[0.0]).unwrap(), 0.0);
        assert_eq!(p.eval(&[-2.0]).unwrap(), 4.0);
        assert!(matches!(p.eval(&[1.0, 2.0]), Err(Error::DimensionMismatch { expected: 1, got: 2 })));
    }

    #[test]
    fn subgrad_examples() {
        let p = abs_plus_half_square();
        assert_eq!(p.subgrad(&[2.0]).unwrap(), vec![3.0]);
        assert_eq!(p.subgrad(&[0.0]).unwrap(), vec![0.0]);
        assert!(p.subgrad(&[]).is_err());
    }

    #[test]
    fn bridge_gradient_by_hand() {
        // γ = 1, α = 1/2: ∂/∂t |t|^{3/2} = 1.5·sign(t)|t|^{1/2}.
        let reg = Regularizer::quadratic(1.0, vec![0.0; 2]).unwrap();
        let a = DenseMatrix::from_rows(&[vec![0.0, 0.0]]).unwrap();
        let p = make_bridge_posterior(a, vec![0.0], 1.0, 0.5, reg).unwrap();
        let g = p.subgrad(&[1.0, 0.0]).unwrap();
        assert!((g[0] - 2.5).abs() < 1e-15);
        assert_eq!(g[1], 0.0);
        let g = p.subgrad(&[4.0, -0.25]).unwrap();
        assert!((g[0] - (1.5 * 2.0 + 4.0)).abs() < 1e-14);
        assert!((g[1] - (-1.5 * 0.5 - 0.25)).abs() < 1e-14);
    }

    #[test]
    fn bridge_posterior_examples() {
        let reg = Regularizer::quadratic(1.0, vec![0.0]).unwrap();
        let p = make_bridge_posterior(DenseMatrix::identity(1), vec![0.0], 1.0, 0.0, reg.clone()).unwrap();
        assert_eq!(p.eval(&[1.0]).unwrap(), 2.5);
        assert_eq!(p.holder(), Holder { l: 2.0, alpha: 0.0 });
        assert_eq!(p.smooth_m(), 3.0);
        assert_eq!(p.strong_lambda(), 1.0);

        let ls = make_bridge_posterior(DenseMatrix::identity(1), vec![0.0], 0.0, 0.0, reg.clone()).unwrap();
        assert_eq!(ls.holder(), Holder { l: 0.0, alpha: 1.0 });

        let zero_rows = DenseMatrix::from_rows(&[vec![0.0]]).unwrap();
        let ridge = make_bridge_posterior(zero_rows, vec![0.0], 1.0, 1.0, reg.clone()).unwrap();
        assert_eq!(ridge.holder().alpha, 1.0);
        assert_eq!(ridge.eval(&[2.0]).unwrap(), 4.0 + 2.0);

        assert!(DenseMatrix::from_rows(&[]).is_err());
        assert!(make_bridge_posterior(DenseMatrix::identity(1), vec![0.0], -1.0, 0.0, reg).is_err());
    }

    #[test]
    fn scalar_holder_constant_matches_closed_form() {
        // sup is attained at u = −t: (t^α + t^α)/(2t)^α = 2^{1−α}.
        for alpha in [0.0, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0] {
            let c = scalar_holder_constant(alpha);
            let expect = 2f64.powf(1.0 - alpha);
            assert!((c - expect).abs() <= 1e-14 * expect, "alpha={alpha}: {c} vs {expect}");
        }
    }

    #[test]
    fn certificate_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let abs = AbsSum::new(1, 1.0).unwrap();
        assert!(verify_certificate(&abs, 1000, 10.0, 1e-9, &mut rng).pass);

        let q = Quadratic::new(1.0, vec![0.0; 3]).unwrap();
        let r = verify_certificate(&q, 1000, 10.0, 1e-9, &mut rng);
        assert!(r.pass);
        assert!((r.max_ratio - 1.0).abs() < 1e-12);

        #[derive(Debug)]
        struct Understated(AbsSum);
        impl Potential for Understated {
            fn dim(&self) -> usize {
                1
            }
            fn value(&self, x: &[f64]) -> f64 {
                self.0.value(x)
            }
            fn subgrad_into(&self, x: &[f64], out: &mut [f64]) {
                self.0.subgrad_into(x, out)
            }
        }
        impl WeaklySmooth for Understated {
            fn holder(&self) -> Holder {
                Holder { l: 1.0, alpha: 0.0 }
            }
            fn name(&self) -> &'static str {
                "understated"
            }
        }
        let r = verify_certificate(&Understated(abs), 100, 10.0, 1e-9, &mut rng);
        assert!(!r.pass);
        assert_eq!(r.max_ratio, 2.0);
    }

    #[test]
    fn shipped_potentials_pass_their_certificates() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let shipped: Vec<Box<dyn WeaklySmooth>> = vec![
            Box::new(Zero::new(3).unwrap()),
            Box::new(AbsSum::new(1, 1.0).unwrap()),
            Box::new(AbsSum::new(5, 0.7).unwrap()),
            Box::new(EuclideanNorm::new(4, 1.3).unwrap()),
            Box::new(Quadratic::new(2.5, vec![1.0, -1.0]).unwrap()),
            Box::new(BridgePenalty::new(1, 1.0, 0.0).unwrap()),
            Box::new(BridgePenalty::new(1, 2.0, 0.5).unwrap()),
            Box::new(BridgePenalty::new(6, 0.5, 0.3).unwrap()),
            Box::new(BridgePenalty::new(10, 1.0, 0.5).unwrap()),
            Box::new(BridgePenalty::new(3, 1.0, 1.0).unwrap()),
        ];
        for p in &shipped {
            let r = verify_certificate(p.as_ref(), 10_000, 10.0, 1e-9, &mut rng);
            assert!(r.pass, "{}: {r:?}", p.name());
        }
    }

    #[test]
    fn least_squares_only_posterior_has_smooth_certificate() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![0.5, -1.0], vec![3.0, 0.0]]).unwrap();
        let reg = Regularizer::quadratic(0.5, vec![0.0; 2]).unwrap();
        let p = make_bridge_posterior(a, vec![1.0, 0.0, -1.0], 0.0, 0.3, reg).unwrap();
        let r = verify_certificate(p.base(), 10_000, 10.0, 1e-9, &mut rng);
        assert!(r.pass);
        assert_eq!(r.declared.alpha, 1.0);
    }

    #[test]
    fn gram_norm_matches_hand_value() {
        // AᵀA = [[2,1],[1,2]] has eigenvalues 1 and 3.
        let a = DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!((a.gram_spectral_norm() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn matrix_from_csv() {
        let m = DenseMatrix::from_csv_str("1,2\n3, 4\n\n").unwrap();
        assert_eq!((m.rows(), m.cols()), (2, 2));
        assert_eq!(m.row(1), &[3.0, 4.0]);
        assert!(DenseMatrix::from_csv_str("1,x").is_err());
        assert!(DenseMatrix::from_csv_str("1,2\n3").is_err());
    }

    #[test]
    fn regularizer_bounds() {
        let r = Regularizer::diagonal(vec![3.0, 0.5], vec![0.0, 1.0]).unwrap();
        assert_eq!((r.smooth_m(), r.strong_lambda()), (3.0, 0.5));
        assert!(Regularizer::diagonal(vec![0.0], vec![0.0]).is_err());
        assert_eq!(r.grad(&[1.0, 1.0]), vec![3.0, 0.0]);
    }
}
