//! Closed-form constants, error bounds and parameter planners.
//!
//! Every evaluator transcribes its formula verbatim in binary64. Planners
//! return the boundary value of each one-sided recipe: the largest admissible
//! step size and the smallest admissible iteration count, rounded up.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Problem data consumed by the planners.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemConstants {
    pub d: usize,
    #[serde(rename = "L")]
    pub l: f64,
    pub alpha: f64,
    pub m: f64,
    pub lambda: f64,
    pub x_star_norm: f64,
    /// Upper estimate of the initial W₂ distance to the (smoothed) target.
    pub w2_init: f64,
    /// Fourth moment of the unregularized target, when known.
    #[serde(default)]
    pub m4: Option<f64>,
}

impl ProblemConstants {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.d == 0 {
            bad.push("d must be >= 1".to_string());
        }
        for (name, v) in [
            ("L", self.l),
            ("m", self.m),
            ("lambda", self.lambda),
            ("x_star_norm", self.x_star_norm),
            ("w2_init", self.w2_init),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                bad.push(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            bad.push(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        if !(self.lambda > 0.0) {
            bad.push("lambda must be > 0".to_string());
        }
        if self.lambda > self.m {
            bad.push(format!("strong convexity exceeds smoothness (lambda={} > m={})", self.lambda, self.m));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(bad.join("; ")))
        }
    }
}

/// Which recipe produced a [`PlanReport`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlanMode {
    Explicit,
    W2,
    Tv,
    DetW2,
    DetTv,
    Regularized,
}

impl std::str::FromStr for PlanMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "explicit" => Ok(Self::Explicit),
            "w2" => Ok(Self::W2),
            "tv" => Ok(Self::Tv),
            "det-w2" => Ok(Self::DetW2),
            "det-tv" => Ok(Self::DetTv),
            "regularized" => Ok(Self::Regularized),
            other => Err(Error::InvalidArgument(format!("unknown plan mode {other:?}"))),
        }
    }
}

/// Planner output with every intermediate constant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanReport {
    pub mode: PlanMode,
    pub eps: Option<f64>,
    pub eta: f64,
    pub mu: f64,
    #[serde(rename = "K")]
    pub k: u64,
    pub eps_bar: Option<f64>,
    pub delta: Option<f64>,
    pub lambda_reg: Option<f64>,
    pub intermediates: BTreeMap<String, f64>,
}

impl PlanReport {
    pub fn explicit(eta: f64, mu: f64, k: u64) -> Self {
        Self {
            mode: PlanMode::Explicit,
            eps: None,
            eta,
            mu,
            k,
            eps_bar: None,
            delta: None,
            lambda_reg: None,
            intermediates: BTreeMap::new(),
        }
    }
}

fn arg(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidArgument(msg()))
    }
}

fn finite(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Range(format!("{name} is not representable in binary64 ({v})")))
    }
}

/// Smallest integer `K ≥ max(raw, 1)`.
fn ceil_count(name: &str, raw: f64) -> Result<u64> {
    let raw = finite(name, raw)?;
    // 2^63 keeps the conversion exact enough and leaves headroom for products.
    if raw >= 9.223_372_036_854_776e18 {
        return Err(Error::Range(format!("{name} = {raw:e} exceeds the iteration counter")));
    }
    Ok(raw.ceil().max(1.0) as u64)
}

/// Deterministic smoothing constant `M(δ) = (1/δ)^{(1−α)/(1+α)}·L^{2/(1+α)}`.
pub fn smooth_approx_m(l: f64, alpha: f64, delta: f64) -> Result<f64> {
    arg(delta > 0.0, || format!("delta must be > 0, got {delta}"))?;
    arg(l >= 0.0, || format!("L must be >= 0, got {l}"))?;
    if alpha == 1.0 {
        return Ok(l);
    }
    let p = 1.0 + alpha;
    finite("M(delta)", (1.0 / delta).powf((1.0 - alpha) / p) * l.powf(2.0 / p))
}

/// Gradient-Lipschitz constant of the Gaussian smoothing,
/// `M_μ = L·d^{(1−α)/2} / (μ^{1−α}(1+α)^{1−α})`.
pub fn smoothing_smoothness_mmu(l: f64, alpha: f64, mu: f64, d: usize) -> Result<f64> {
    arg(mu >= 0.0, || format!("mu must be >= 0, got {mu}"))?;
    if alpha == 1.0 {
        return Ok(l);
    }
    arg(mu > 0.0, || "M_mu is unbounded at mu = 0 for alpha < 1".into())?;
    let e = 1.0 - alpha;
    finite("M_mu", l * (d as f64).powf(e / 2.0) / (mu.powf(e) * (1.0 + alpha).powf(e)))
}

/// Upper bound on `U_μ − U`: `L·μ^{1+α}·d^{(1+α)/2}/(1+α)`.
pub fn smoothing_gap(l: f64, alpha: f64, mu: f64, d: usize) -> Result<f64> {
    arg(mu >= 0.0, || format!("mu must be >= 0, got {mu}"))?;
    let p = 1.0 + alpha;
    Ok(l * mu.powf(p) * (d as f64).powf(p / 2.0) / p)
}

/// Normalized variance bound of the perturbed gradient,
/// `4d^{α−1}μ^{2α}L² + 4μ²m²`. At `μ = 0, α = 0` this is `4L²/d`.
pub fn variance_bound(l: f64, alpha: f64, m: f64, mu: f64, d: usize) -> Result<f64> {
    arg(mu >= 0.0, || format!("mu must be >= 0, got {mu}"))?;
    Ok(4.0 * (d as f64).powf(alpha - 1.0) * mu.powf(2.0 * alpha) * l * l + 4.0 * mu * mu * m * m)
}

/// Normalized variance bound of the shifted gradient,
/// `8d^{α−1}μ^{2α}L² + 8μ²m² + 2μ²/η²`.
pub fn shifted_variance_bound(l: f64, alpha: f64, m: f64, mu: f64, eta: f64, d: usize) -> Result<f64> {
    arg(eta > 0.0, || format!("eta must be > 0, got {eta}"))?;
    arg(mu >= 0.0, || format!("mu must be >= 0, got {mu}"))?;
    Ok(8.0 * (d as f64).powf(alpha - 1.0) * mu.powf(2.0 * alpha) * l * l
        + 8.0 * mu * mu * m * m
        + 2.0 * mu * mu / (eta * eta))
}

/// `β_μ = L·μ^{1+α}·d^{(1+α)/2}/(√2(1+α)) + m·μ²·d/2`.
pub fn beta_mu(l: f64, alpha: f64, m: f64, mu: f64, d: usize) -> Result<f64> {
    arg(mu >= 0.0, || format!("mu must be >= 0, got {mu}"))?;
    let p = 1.0 + alpha;
    let d = d as f64;
    Ok(l * mu.powf(p) * d.powf(p / 2.0) / (std::f64::consts::SQRT_2 * p) + m * mu * mu * d / 2.0)
}

/// Transport-entropy constant `C = (8/λ)(3/2 + (d/2)·log(2(M+m)/λ))^{1/2}`,
/// with `m_total = M + m`.
pub fn bolley_villani_constant(lambda: f64, m_total: f64, d: usize) -> Result<f64> {
    arg(lambda > 0.0, || format!("lambda must be > 0, got {lambda}"))?;
    let ratio = 2.0 * m_total / lambda;
    if !(ratio > 0.0) {
        return Err(Error::InvalidArgument(format!("nonpositive log argument 2(M+m)/lambda = {ratio}")));
    }
    let radicand = 1.5 + 0.5 * d as f64 * ratio.ln();
    if radicand < 0.0 {
        return Err(Error::InvalidArgument(format!("negative radicand {radicand} in transport constant")));
    }
    Ok(8.0 / lambda * radicand.sqrt())
}

/// `W₂(p̄*, p̄*_μ) ≤ C·(β + √(β/2))` with `C` from [`bolley_villani_constant`]
/// evaluated at `M := m_mu`.
pub fn w2_smoothing_bias(consts: &ProblemConstants, m_mu: f64, beta: f64) -> Result<f64> {
    arg(beta >= 0.0, || format!("beta must be >= 0, got {beta}"))?;
    arg(m_mu + consts.m > consts.lambda / 2.0, || "requires M_mu + m > lambda/2".into())?;
    let c = bolley_villani_constant(consts.lambda, m_mu + consts.m, consts.d)?;
    Ok(c * (beta + (beta / 2.0).sqrt()))
}

/// Three-term W₂ bound after `K` noisy-gradient steps:
/// `(1−λη)^{K/2}·W₀ + (2Mηd/λ)^{1/2} + σ·((1+η)ηd/λ)^{1/2}` with `M = m_total`.
pub fn w2_recursion_bound(
    m_total: f64,
    lambda: f64,
    eta: f64,
    d: usize,
    sigma2: f64,
    k: u64,
    w2_init: f64,
) -> Result<f64> {
    arg(lambda > 0.0 && eta >= 0.0 && sigma2 >= 0.0 && w2_init >= 0.0 && m_total >= 0.0, || {
        "recursion bound inputs must be nonnegative with lambda > 0".into()
    })?;
    if eta > 2.0 / (m_total + lambda) || lambda * eta > 1.0 {
        return Err(Error::Precondition(format!(
            "step size {eta} violates eta <= 2/(M+lambda) = {} or lambda*eta <= 1",
            2.0 / (m_total + lambda)
        )));
    }
    let d = d as f64;
    let contraction = (1.0 - lambda * eta).powf(k as f64 / 2.0);
    Ok(contraction * w2_init
        + (2.0 * m_total * eta * d / lambda).sqrt()
        + sigma2.sqrt() * ((1.0 + eta) * eta * d / lambda).sqrt())
}

/// KL bound from a W₂ bound:
/// `(M̄√(2d/λ + 2‖x*‖²)/2 + M̄√(4d/λ + 4‖x*‖² + 2W²)/2 + M̄‖x*‖)·W`.
pub fn kl_from_w2(m_total: f64, lambda: f64, d: usize, x_star_norm: f64, w2: f64) -> Result<f64> {
    arg(m_total >= 0.0 && x_star_norm >= 0.0 && w2 >= 0.0, || "kl_from_w2 inputs must be nonnegative".into())?;
    arg(lambda > 0.0, || format!("lambda must be > 0, got {lambda}"))?;
    let d = d as f64;
    let xs2 = x_star_norm * x_star_norm;
    let a = m_total * (2.0 * d / lambda + 2.0 * xs2).sqrt() / 2.0;
    let b = m_total * (4.0 * d / lambda + 4.0 * xs2 + 2.0 * w2 * w2).sqrt() / 2.0;
    Ok((a + b + m_total * x_star_norm) * w2)
}

/// Regularization strength `λ = 4ε′/(√𝓜₄ + ‖x′ − x*‖²)`.
pub fn plan_regularized(eps_prime: f64, m4: f64, dist_xprime_xstar: f64) -> Result<f64> {
    arg(eps_prime > 0.0 && eps_prime <= 1.0, || format!("eps' must lie in (0, 1], got {eps_prime}"))?;
    arg(m4 > 0.0, || format!("fourth moment must be > 0, got {m4}"))?;
    arg(dist_xprime_xstar >= 0.0, || format!("distance must be >= 0, got {dist_xprime_xstar}"))?;
    Ok(4.0 * eps_prime / (m4.sqrt() + dist_xprime_xstar * dist_xprime_xstar))
}

/// Squared-W₂ one-step discretization bound, returned as its square root:
/// `8d(M+m)⁴η⁴/λ + 8(M+m)⁴η⁴W² + 32δ(M+m)²Mη⁴ + 4d(M+m)²η³ + 8δMη²`.
pub fn discretization_w2_bound(
    big_m: f64,
    m: f64,
    lambda: f64,
    delta: f64,
    eta: f64,
    d: usize,
    w2_init: f64,
) -> Result<f64> {
    arg(lambda > 0.0 && eta >= 0.0 && delta >= 0.0 && big_m >= 0.0 && m >= 0.0 && w2_init >= 0.0, || {
        "discretization bound inputs must be nonnegative with lambda > 0".into()
    })?;
    if !(eta < 1.0 / (2.0 * lambda)) {
        return Err(Error::Precondition(format!("requires eta < 1/(2 lambda), got eta = {eta}")));
    }
    let d = d as f64;
    let s = big_m + m;
    let (s2, s4) = (s * s, s * s * s * s);
    let (e2, e3, e4) = (eta * eta, eta * eta * eta, eta * eta * eta * eta);
    let sq = 8.0 * d * s4 * e4 / lambda
        + 8.0 * s4 * e4 * w2_init * w2_init
        + 32.0 * delta * s2 * big_m * e4
        + 4.0 * d * s2 * e3
        + 8.0 * delta * big_m * e2;
    Ok(sq.sqrt())
}

fn check_eps_stochastic(eps: f64, upper: f64, inclusive: bool) -> Result<()> {
    let ok = eps > 0.0 && if inclusive { eps <= upper } else { eps < upper };
    arg(ok, || {
        let close = if inclusive { ']' } else { ')' };
        format!("eps must lie in (0, {upper}{close}, got {eps}")
    })
}

/// Halves `eta` until `eta < ceiling`; returns the number of halvings.
fn enforce_below(eta: &mut f64, ceiling: f64) -> u32 {
    let mut n = 0;
    while !(*eta < ceiling) {
        *eta /= 2.0;
        n += 1;
    }
    n
}

/// P-LMC plan for a W₂ guarantee.
///
/// `μ = ε^{2/(1+α)}·min{λ^{2/(1+α)}, 1} / (300√d(√m + L^{1/(1+α)})·[10 + d·log(ε⁻²(m+L)d/λ)]^{1/2})`,
/// `η = ε²μ^{1−α}λ / (1000(L+m)d^{(3−α)/2})` (halved until `η < 2/(M_μ+m+λ)`),
/// `K = ⌈log(3W₀/ε)/(λη)⌉`.
pub fn plan_w2(eps: f64, consts: &ProblemConstants) -> Result<PlanReport> {
    consts.validate()?;
    let d = consts.d;
    let df = d as f64;
    check_eps_stochastic(eps, df.powf(0.25), false)?;
    arg(consts.w2_init > 0.0, || "w2_init must be > 0".into())?;
    let (l, a, m, lam) = (consts.l, consts.alpha, consts.m, consts.lambda);
    let p = 1.0 + a;

    let log_term = (eps.powi(-2) * (m + l) * df / lam).ln();
    let bracket = 10.0 + df * log_term;
    if !(bracket > 0.0) {
        return Err(Error::Range(format!("nonpositive bracket {bracket} in the mu recipe")));
    }
    let mu = eps.powf(2.0 / p) * lam.powf(2.0 / p).min(1.0)
        / (300.0 * df.sqrt() * (m.sqrt() + l.powf(1.0 / p)) * bracket.sqrt());
    let mu = finite("mu", mu)?;
    let eta_formula = eps * eps * mu.powf(1.0 - a) * lam / (1000.0 * (l + m) * df.powf((3.0 - a) / 2.0));
    let m_mu = smoothing_smoothness_mmu(l, a, mu, d)?;
    let ceiling = 2.0 / (m_mu + m + lam);
    let mut eta = eta_formula;
    let halvings = enforce_below(&mut eta, ceiling);
    let k = ceil_count("K", (3.0 * consts.w2_init / eps).ln() / (lam * eta))?;

    let sigma2 = variance_bound(l, a, m, mu, d)?;
    let beta = beta_mu(l, a, m, mu, d)?;
    let c = bolley_villani_constant(lam, m_mu + m, d)?;
    let bias = w2_smoothing_bias(consts, m_mu, beta)?;
    let recursion = w2_recursion_bound(m_mu + m, lam, eta, d, sigma2, k, consts.w2_init)?;

    let intermediates = BTreeMap::from([
        ("M_mu".to_string(), m_mu),
        ("sigma2_bound".to_string(), sigma2),
        ("beta_mu".to_string(), beta),
        ("C".to_string(), c),
        ("bias_bound".to_string(), bias),
        ("log_term".to_string(), log_term),
        ("eta_formula".to_string(), eta_formula),
        ("eta_ceiling".to_string(), ceiling),
        ("eta_halvings".to_string(), f64::from(halvings)),
        ("recursion_bound".to_string(), recursion),
        ("w2_bound".to_string(), recursion + bias),
    ]);
    Ok(PlanReport {
        mode: PlanMode::W2,
        eps: Some(eps),
        eta,
        mu,
        k,
        eps_bar: None,
        delta: None,
        lambda_reg: None,
        intermediates,
    })
}

/// P-LMC plan for a TV guarantee.
///
/// `μ = min{ε^{1/(1+α)}/(4·max{1, L^{1/(1+α)}}·√d), √(ελ/(2m²d))}`, `M = M_μ`,
/// `ε̄ = ε²/(4·max{(M+m)(√(2d/λ + 2‖x*‖²) + 2‖x*‖²), 1})`,
/// `η = ε̄²λ/(64d(M+m))`, `K = ⌈log(2W₀/ε̄)/(λη)⌉`.
pub fn plan_tv(eps: f64, consts: &ProblemConstants) -> Result<PlanReport> {
    consts.validate()?;
    check_eps_stochastic(eps, 1.0, true)?;
    arg(consts.w2_init > 0.0, || "w2_init must be > 0".into())?;
    let d = consts.d;
    let df = d as f64;
    let (l, a, m, lam, xs) = (consts.l, consts.alpha, consts.m, consts.lambda, consts.x_star_norm);
    let p = 1.0 + a;

    let mu_holder = eps.powf(1.0 / p) / (4.0 * l.powf(1.0 / p).max(1.0) * df.sqrt());
    let mu_smooth = (eps * lam / (2.0 * m * m * df)).sqrt();
    let mu = mu_holder.min(mu_smooth);
    let m_mu = smoothing_smoothness_mmu(l, a, mu, d)?;
    let mt = m_mu + m;
    let xs2 = xs * xs;
    let spread = mt * ((2.0 * df / lam + 2.0 * xs2).sqrt() + 2.0 * xs2);
    let eps_bar = eps * eps / (4.0 * spread.max(1.0));
    let eta_formula = eps_bar * eps_bar * lam / (64.0 * df * mt);
    let ceiling = 2.0 / (mt + lam);
    let mut eta = eta_formula;
    let halvings = enforce_below(&mut eta, ceiling);
    let k = ceil_count("K", (2.0 * consts.w2_init / eps_bar).ln() / (lam * eta))?;

    let sigma2 = variance_bound(l, a, m, mu, d)?;
    let beta = beta_mu(l, a, m, mu, d)?;
    let recursion = w2_recursion_bound(mt, lam, eta, d, sigma2, k, consts.w2_init)?;
    let kl = kl_from_w2(mt, lam, d, xs, recursion)?;
    let tv_gap = smoothing_gap(l, a, mu, d)? + lam * mu * mu * df / 2.0;

    let intermediates = BTreeMap::from([
        ("M_mu".to_string(), m_mu),
        ("mu_holder".to_string(), mu_holder),
        ("mu_smooth".to_string(), mu_smooth),
        ("sigma2_bound".to_string(), sigma2),
        ("beta_mu".to_string(), beta),
        ("eta_formula".to_string(), eta_formula),
        ("eta_ceiling".to_string(), ceiling),
        ("eta_halvings".to_string(), f64::from(halvings)),
        ("recursion_bound".to_string(), recursion),
        ("kl_bound".to_string(), kl),
        ("tv_smoothing_gap".to_string(), tv_gap),
        ("tv_bound".to_string(), tv_gap + kl.sqrt()),
    ]);
    Ok(PlanReport {
        mode: PlanMode::Tv,
        eps: Some(eps),
        eta,
        mu,
        k,
        eps_bar: Some(eps_bar),
        delta: None,
        lambda_reg: None,
        intermediates,
    })
}

/// Regularize an unregularized target and plan for TV accuracy `ε′`.
///
/// `λ` comes from [`plan_regularized`]; the quadratic regularizer replaces
/// the strong-convexity part of `consts`, so `m ← m − λ_old + λ`. The TV plan
/// then runs at `ε′/2`.
pub fn plan_regularized_tv(eps_prime: f64, dist_xprime_xstar: f64, consts: &ProblemConstants) -> Result<PlanReport> {
    let m4 = consts.m4.ok_or_else(|| Error::InvalidArgument("regularized plan needs the fourth moment m4".into()))?;
    let lambda = plan_regularized(eps_prime, m4, dist_xprime_xstar)?;
    let mut c = consts.clone();
    c.m = consts.m - consts.lambda + lambda;
    c.lambda = lambda;
    let mut report = plan_tv(eps_prime / 2.0, &c)?;
    report.mode = PlanMode::Regularized;
    report.eps = Some(eps_prime);
    report.lambda_reg = Some(lambda);
    report.intermediates.insert("m_regularized".into(), c.m);
    report.intermediates.insert("regularization_tv_penalty".into(), lambda * m4.sqrt() / 2.0
        + lambda * dist_xprime_xstar * dist_xprime_xstar / 2.0);
    Ok(report)
}

fn check_deterministic(consts: &ProblemConstants, eps: f64) -> Result<()> {
    consts.validate()?;
    if consts.alpha == 0.0 {
        return Err(Error::InvalidArgument(
            "deterministic plan undefined at alpha = 0: the smoothing bias 2*sqrt(delta*M(delta)) is constant in delta".into(),
        ));
    }
    arg(eps > 0.0, || format!("eps must be > 0, got {eps}"))?;
    arg(consts.l > 0.0, || "deterministic plans need L > 0".into())
}

/// Plain-LMC plan on the deterministic smooth approximation, W₂ guarantee.
///
/// `δ = (λε/(24L^{1/(1+α)}))^{(1+α)/α}`, `M = M(δ)`,
/// `A = (24/(λε))^{(1−α)/α}·L^{1/α} + m`,
/// `η = min{min{λ,λ²}ε²/(90000d)/A, 1/(2λ), λ/(36(M+m))}`,
/// `K = ⌈720000d/(min{1,λ}ε²λ²)·A·log(W₀/ε)⌉`.
pub fn plan_det_w2(eps: f64, consts: &ProblemConstants) -> Result<PlanReport> {
    check_deterministic(consts, eps)?;
    let d = consts.d as f64;
    let (l, a, m, lam) = (consts.l, consts.alpha, consts.m, consts.lambda);
    let p = 1.0 + a;

    let delta = finite("delta", (lam * eps / (24.0 * l.powf(1.0 / p))).powf(p / a))?;
    if delta == 0.0 {
        return Err(Error::Range("delta underflows to 0".into()));
    }
    let big_m = smooth_approx_m(l, a, delta)?;
    let m_closed = finite("(24/(lambda eps))^((1-alpha)/alpha) L^(1/alpha)", (24.0 / (lam * eps)).powf((1.0 - a) / a) * l.powf(1.0 / a))?;
    let amp = m_closed + m;
    let eta_accuracy = lam.min(lam * lam) * eps * eps / (90000.0 * d) / amp;
    let eta_contraction = 1.0 / (2.0 * lam);
    let eta_smooth = lam / (36.0 * (big_m + m));
    let eta = eta_accuracy.min(eta_contraction).min(eta_smooth);
    let log_term = (consts.w2_init / eps).ln();
    let k = ceil_count("K", 720000.0 * d / (1f64.min(lam) * eps * eps * lam * lam) * amp * log_term)?;

    let mut intermediates = BTreeMap::from([
        ("M".to_string(), big_m),
        ("M_closed_form".to_string(), m_closed),
        ("A".to_string(), amp),
        ("eta_accuracy".to_string(), eta_accuracy),
        ("eta_contraction".to_string(), eta_contraction),
        ("eta_smooth".to_string(), eta_smooth),
        ("log_term".to_string(), log_term),
    ]);
    if let Ok(b) = discretization_w2_bound(big_m, m, lam, delta, eta, consts.d, consts.w2_init) {
        intermediates.insert("discretization_bound".into(), b);
    }
    Ok(PlanReport {
        mode: PlanMode::DetW2,
        eps: Some(eps),
        eta,
        mu: 0.0,
        k,
        eps_bar: None,
        delta: Some(delta),
        lambda_reg: None,
        intermediates,
    })
}

/// Iterations allowed for the `δ ↔ M(δ)` fixed point in [`plan_det_tv`].
const DET_TV_MAX_ITERS: u32 = 1000;

/// Plain-LMC plan on the deterministic smooth approximation, TV guarantee,
/// for a Gaussian start `N(x*, (M+m)⁻¹I)`.
///
/// `δ = min{[λε²/(8d·log((M+m)/λ)·L^{2/(1+α)})]^{(1+α)/(2α)}, 1}` with
/// `M = M(δ)`. The recipe is implicit in `δ`; it is solved by iterating
/// `δ ← f(δ)` from `δ = 1`, which decreases monotonically to the largest
/// fixed point. Then
/// `η = min{1, 1/(2β(M+m)), λε²/(32d²(M+m)²·log((M+m)/λ))}` (kept strictly
/// below `1/(2(M+m))`) and `K = ⌈max{β, d·log((M+m)/λ)/(4ηλ) + δ/(4ηλ)}⌉`.
pub fn plan_det_tv(eps: f64, beta: f64, consts: &ProblemConstants) -> Result<PlanReport> {
    check_deterministic(consts, eps)?;
    arg(beta >= 1.0, || format!("beta must be >= 1, got {beta}"))?;
    let d = consts.d as f64;
    let (l, a, m, lam) = (consts.l, consts.alpha, consts.m, consts.lambda);
    let p = 1.0 + a;

    let delta_of = |delta: f64| -> Result<(f64, f64, f64)> {
        let big_m = smooth_approx_m(l, a, delta)?;
        let log_term = ((big_m + m) / lam).ln();
        let next = if log_term > 0.0 {
            (lam * eps * eps / (8.0 * d * log_term * l.powf(2.0 / p))).powf(p / (2.0 * a)).min(1.0)
        } else {
            1.0
        };
        Ok((next, big_m, log_term))
    };
    let mut delta = 1.0;
    let mut iterations = 0;
    loop {
        let (next, _, _) = delta_of(delta)?;
        iterations += 1;
        if next == 0.0 {
            return Err(Error::Range("delta underflows to 0".into()));
        }
        let done = (next - delta).abs() <= 1e-15 * delta;
        delta = next;
        if done || iterations >= DET_TV_MAX_ITERS {
            break;
        }
    }
    let big_m = smooth_approx_m(l, a, delta)?;
    let mt = big_m + m;
    let log_term = (mt / lam).ln();
    let residual = (delta_of(delta)?.0 - delta).abs() / delta;

    let eta_beta = 1.0 / (2.0 * beta * mt);
    let eta_accuracy = if log_term > 0.0 {
        lam * eps * eps / (32.0 * d * d * mt * mt * log_term)
    } else {
        f64::INFINITY
    };
    let mut eta = 1f64.min(eta_beta).min(eta_accuracy);
    let ceiling = 1.0 / (2.0 * mt);
    if !(eta < ceiling) {
        eta = f64::from_bits(ceiling.to_bits() - 1);
    }
    let k_mix = d / (4.0 * eta * lam) * log_term.max(0.0) + delta / (4.0 * eta * lam);
    let k = ceil_count("K", beta.max(k_mix))?;

    let intermediates = BTreeMap::from([
        ("M".to_string(), big_m),
        ("log_term".to_string(), log_term),
        ("eta_beta".to_string(), eta_beta),
        ("eta_accuracy".to_string(), eta_accuracy),
        ("eta_ceiling".to_string(), ceiling),
        ("K_mixing".to_string(), k_mix),
        ("beta".to_string(), beta),
        ("fixed_point_iterations".to_string(), f64::from(iterations)),
        ("fixed_point_residual".to_string(), residual),
    ]);
    Ok(PlanReport {
        mode: PlanMode::DetTv,
        eps: Some(eps),
        eta,
        mu: 0.0,
        k,
        eps_bar: None,
        delta: Some(delta),
        lambda_reg: None,
        intermediates,
    })
}
