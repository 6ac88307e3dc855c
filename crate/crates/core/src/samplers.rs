//! LMC, P-LMC and S-LMC chains and parallel ensembles.
//!
//! Noise layout per chain (one normal d-vector per entry):
//! `ω₋₁, ξ₀, ω₀, ξ₁, ω₁, …, ξ_{K−1}, ω_{K−1}` for the perturbed variants and
//! `ξ₀, …, ξ_{K−1}` for LMC. P-LMC and S-LMC report the `y` iterates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::smoothing_smoothness_mmu;
use crate::error::{check_dim, Error, Result};
use crate::hash::config_hash;
use crate::metrics::{SampleMeta, SampleSet};
use crate::potential::{CompositePotential, Potential};
use crate::rng::{derive_seed, stream, tag, GaussianSource, NormalStream, StreamRng};

/// Iterates with norm above this abort the chain.
pub const DIVERGENCE_NORM: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Variant {
    Lmc,
    Plmc,
    Slmc,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Lmc => "LMC",
            Variant::Plmc => "PLMC",
            Variant::Slmc => "SLMC",
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace('-', "").as_str() {
            "LMC" => Ok(Variant::Lmc),
            "PLMC" => Ok(Variant::Plmc),
            "SLMC" => Ok(Variant::Slmc),
            _ => Err(Error::InvalidArgument(format!("unknown sampler variant {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub variant: Variant,
    pub eta: f64,
    #[serde(default)]
    pub mu: f64,
    #[serde(rename = "K")]
    pub k: u64,
    pub seed: u64,
    #[serde(default = "one")]
    pub n_chains: usize,
    #[serde(default = "one_u64")]
    pub record_every: u64,
}

fn one() -> usize {
    1
}

fn one_u64() -> u64 {
    1
}

impl SamplerConfig {
    pub fn new(variant: Variant, eta: f64, mu: f64, k: u64, seed: u64) -> Self {
        Self { variant, eta, mu, k, seed, n_chains: 1, record_every: 1 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidArgument(format!("step size must be finite and >= 0, got {}", self.eta)));
        }
        if self.variant == Variant::Slmc && self.eta == 0.0 {
            return Err(Error::InvalidArgument("S-LMC divides by eta; eta = 0 is rejected".into()));
        }
        if self.variant != Variant::Lmc && !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(Error::InvalidArgument(format!("smoothing radius must be finite and >= 0, got {}", self.mu)));
        }
        if self.n_chains == 0 {
            return Err(Error::InvalidArgument("n_chains must be >= 1".into()));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidArgument("record_every must be >= 1".into()));
        }
        Ok(())
    }

    fn expect(&self, v: Variant) -> Result<()> {
        if self.variant == v {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("config variant is {}, expected {v}", self.variant)))
        }
    }
}

/// How each chain's initial point is drawn.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitStrategy {
    Point { center: Vec<f64> },
    /// `N(x̂, s·I)` at an approximate minimizer `x̂`; `s` defaults to
    /// `(M_μ + m)⁻¹`.
    GaussianAtMin {
        #[serde(default)]
        scale: Option<f64>,
    },
    /// `N(center, scale·I)`.
    Custom { center: Vec<f64>, scale: f64 },
}

/// Resolved initial distribution `N(center, std²·I)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InitSampler {
    pub center: Vec<f64>,
    pub std: f64,
    /// `false` when the minimizer search failed and `center` fell back to 0.
    pub minimizer_converged: bool,
    pub minimizer_iterations: u32,
}

impl InitSampler {
    /// Initial point of chain `index`.
    pub fn draw(&self, seed: u64, index: u64) -> Vec<f64> {
        let mut x = self.center.clone();
        if self.std > 0.0 {
            let mut noise = NormalStream::new(stream(seed, tag::INIT, index));
            let mut z = vec![0.0; x.len()];
            noise.fill_normal(&mut z);
            for (xi, zi) in x.iter_mut().zip(&z) {
                *xi += self.std * zi;
            }
        }
        x
    }
}

/// Outcome of [`approximate_minimizer`].
#[derive(Clone, Debug, PartialEq)]
pub struct MinimizerResult {
    pub x: Vec<f64>,
    pub converged: bool,
    pub iterations: u32,
    pub stationarity: f64,
}

const MINIMIZER_ITERS: u32 = 10_000;
const MINIMIZER_TOL: f64 = 1e-6;

/// Subgradient descent on `Ū` from the regularizer center with steps
/// `1/(m+λ)·k^{−1/2}`, stopping once the min-norm element of `∇ψ + ∂U` has
/// norm at most 10⁻⁶.
///
/// Subgradient steps never land exactly on a kink, so before giving up the
/// best iterate is retried with its small coordinates set to zero. If nothing
/// passes, `x` is the origin and `converged` is false.
pub fn approximate_minimizer(pot: &CompositePotential) -> MinimizerResult {
    if let Some(h) = pot.minimizer_hint() {
        return MinimizerResult { x: h.to_vec(), converged: true, iterations: 0, stationarity: 0.0 };
    }
    let d = pot.dim();
    let step0 = 1.0 / (pot.smooth_m() + pot.strong_lambda());
    let mut x = pot.regularizer().center().to_vec();
    let mut g = vec![0.0; d];
    let mut best = x.clone();
    let mut best_val = pot.value(&x);
    for k in 1..=MINIMIZER_ITERS {
        let s = pot.stationarity(&x);
        if s <= MINIMIZER_TOL {
            return MinimizerResult { x, converged: true, iterations: k - 1, stationarity: s };
        }
        pot.subgrad_into(&x, &mut g);
        let step = step0 / f64::from(k).sqrt();
        for (xi, gi) in x.iter_mut().zip(&g) {
            *xi -= step * gi;
        }
        let v = pot.value(&x);
        if v < best_val {
            best_val = v;
            best.clone_from(&x);
        }
    }
    let mut snapped = best.clone();
    for threshold in [0.0, 1e-8, 1e-6, 1e-4, 1e-2] {
        for (si, bi) in snapped.iter_mut().zip(&best) {
            *si = if bi.abs() <= threshold { 0.0 } else { *bi };
        }
        let s = pot.stationarity(&snapped);
        if s <= MINIMIZER_TOL {
            return MinimizerResult { x: snapped, converged: true, iterations: MINIMIZER_ITERS, stationarity: s };
        }
    }
    let s = pot.stationarity(&best);
    MinimizerResult { x: vec![0.0; d], converged: false, iterations: MINIMIZER_ITERS, stationarity: s }
}

/// Resolves `strategy` into a per-chain initial distribution. `mu` selects
/// the smoothed curvature `M_μ` used for the default Gaussian variance.
pub fn make_init(pot: &CompositePotential, strategy: &InitStrategy, mu: f64) -> Result<InitSampler> {
    let d = pot.dim();
    match strategy {
        InitStrategy::Point { center } => {
            check_dim(d, center.len())?;
            Ok(InitSampler { center: center.clone(), std: 0.0, minimizer_converged: true, minimizer_iterations: 0 })
        }
        InitStrategy::Custom { center, scale } => {
            check_dim(d, center.len())?;
            check_scale(*scale)?;
            Ok(InitSampler { center: center.clone(), std: scale.sqrt(), minimizer_converged: true, minimizer_iterations: 0 })
        }
        InitStrategy::GaussianAtMin { scale } => {
            let s = match scale {
                Some(s) => *s,
                None => {
                    let h = pot.holder();
                    let m_mu = if h.alpha == 1.0 || mu > 0.0 {
                        smoothing_smoothness_mmu(h.l, h.alpha, mu, d)?
                    } else {
                        return Err(Error::InvalidArgument(
                            "gaussian_at_min needs an explicit scale when mu = 0 and alpha < 1".into(),
                        ));
                    };
                    1.0 / (m_mu + pot.smooth_m())
                }
            };
            check_scale(s)?;
            let min = approximate_minimizer(pot);
            Ok(InitSampler {
                center: min.x,
                std: s.sqrt(),
                minimizer_converged: min.converged,
                minimizer_iterations: min.iterations,
            })
        }
    }
}

fn check_scale(s: f64) -> Result<()> {
    if s > 0.0 && s.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("initial covariance scale must be finite and > 0, got {s}")))
    }
}

/// One simulated chain.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Chain {
    /// Iterates `0, r, 2r, …` up to `K` (`⌊K/r⌋ + 1` entries).
    pub iterates: Vec<Vec<f64>>,
    pub final_state: Vec<f64>,
    pub config_hash: u64,
    /// Seed of this chain's noise stream.
    pub seed: u64,
    pub chain_index: usize,
    pub grad_calls: u64,
    pub normal_draws: u64,
}

/// Raw trajectory produced by [`simulate`].
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub iterates: Vec<Vec<f64>>,
    pub final_state: Vec<f64>,
    pub grad_calls: u64,
}

fn diverged(x: &[f64]) -> bool {
    let mut s = 0.0;
    for v in x {
        if !v.is_finite() {
            return true;
        }
        s += v * v;
    }
    s.sqrt() > DIVERGENCE_NORM
}

/// Runs one chain of `variant` from `x0` drawing noise from `noise`.
///
/// LMC takes one vector per step. P-LMC and S-LMC take `ω₋₁` up front and
/// then `ξ_k, ω_k` per step. With `mu = 0` the perturbation is skipped
/// entirely (the draws are still consumed), so the update is bitwise LMC's.
/// `chain` only labels divergence errors.
#[allow(clippy::too_many_arguments)]
pub fn simulate<S: GaussianSource>(
    pot: &dyn Potential,
    variant: Variant,
    eta: f64,
    mu: f64,
    k: u64,
    record_every: u64,
    x0: Vec<f64>,
    noise: &mut S,
    chain: usize,
) -> Result<Trajectory> {
    let d = pot.dim();
    check_dim(d, x0.len())?;
    let r = record_every.max(1);
    let mut iterates = Vec::with_capacity((k / r + 1).min(1 << 20) as usize);
    iterates.push(x0.clone());
    let sq = (2.0 * eta).sqrt();
    let perturbed = variant != Variant::Lmc;
    let use_mu = perturbed && mu != 0.0;

    let mut y = x0;
    let mut q = vec![0.0; d];
    let mut g = vec![0.0; d];
    let mut xi = vec![0.0; d];
    let mut omega = vec![0.0; d];
    if perturbed {
        noise.fill_normal(&mut omega);
    }
    for step in 0..k {
        let point: &[f64] = if use_mu {
            for ((qi, yi), wi) in q.iter_mut().zip(&y).zip(&omega) {
                *qi = yi + mu * wi;
            }
            &q
        } else {
            &y
        };
        pot.subgrad_into(point, &mut g);
        noise.fill_normal(&mut xi);
        if use_mu && variant == Variant::Slmc {
            for (((yi, qi), gi), ni) in y.iter_mut().zip(&q).zip(&g).zip(&xi) {
                *yi = qi - eta * gi + sq * ni;
            }
        } else {
            for ((yi, gi), ni) in y.iter_mut().zip(&g).zip(&xi) {
                *yi = *yi - eta * gi + sq * ni;
            }
        }
        if perturbed {
            noise.fill_normal(&mut omega);
        }
        if diverged(&y) {
            return Err(Error::Diverged { chain, step: step + 1 });
        }
        if (step + 1) % r == 0 {
            iterates.push(y.clone());
        }
    }
    Ok(Trajectory { iterates, final_state: y, grad_calls: k })
}

/// S-LMC written in the shifted variable
/// `x_{k+1} = x_k − η∇Ū(x_k) + √(2η)ξ_k + μω_k`, `x₀ = y₀ + μω₋₁`.
///
/// Returns every `x_k`, `k = 0..=K`. On the same stream,
/// `x_k == y_k + μω_{k−1}` bitwise with `y_k` from [`run_slmc`].
pub fn run_slmc_x_form(pot: &CompositePotential, cfg: &SamplerConfig, y0: &[f64]) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    cfg.expect(Variant::Slmc)?;
    let d = pot.dim();
    check_dim(d, y0.len())?;
    let mut noise = NormalStream::new(chain_stream(cfg.seed, 0));
    let (eta, mu) = (cfg.eta, cfg.mu);
    let sq = (2.0 * eta).sqrt();
    let mut omega = vec![0.0; d];
    let mut xi = vec![0.0; d];
    let mut g = vec![0.0; d];
    noise.fill_normal(&mut omega);
    let mut x: Vec<f64> = y0.iter().zip(&omega).map(|(y, w)| y + mu * w).collect();
    let mut out = vec![x.clone()];
    for step in 0..cfg.k {
        pot.subgrad_into(&x, &mut g);
        noise.fill_normal(&mut xi);
        noise.fill_normal(&mut omega);
        for (((xv, gi), ni), wi) in x.iter_mut().zip(&g).zip(&xi).zip(&omega) {
            *xv = *xv - eta * gi + sq * ni + mu * wi;
        }
        if diverged(&x) {
            return Err(Error::Diverged { chain: 0, step: step + 1 });
        }
        out.push(x.clone());
    }
    Ok(out)
}

/// Seed of chain `index`'s noise stream.
pub fn chain_seed(seed: u64, index: usize) -> u64 {
    derive_seed(seed, tag::NOISE, index as u64)
}

fn chain_stream(seed: u64, index: usize) -> StreamRng {
    stream(seed, tag::NOISE, index as u64)
}

/// Hash identifying `(cfg, init)`; chains and sample sets carry it.
pub fn sampler_hash(cfg: &SamplerConfig, init: &InitStrategy) -> u64 {
    config_hash(&(cfg, init)).expect("sampler config serializes")
}

fn run_indexed(
    pot: &CompositePotential,
    cfg: &SamplerConfig,
    init: &InitSampler,
    hash: u64,
    index: usize,
) -> Result<Chain> {
    let x0 = init.draw(cfg.seed, index as u64);
    let mut noise = NormalStream::new(chain_stream(cfg.seed, index));
    let t = simulate(pot, cfg.variant, cfg.eta, cfg.mu, cfg.k, cfg.record_every, x0, &mut noise, index)?;
    Ok(Chain {
        iterates: t.iterates,
        final_state: t.final_state,
        config_hash: hash,
        seed: chain_seed(cfg.seed, index),
        chain_index: index,
        grad_calls: t.grad_calls,
        normal_draws: noise.vectors_drawn(),
    })
}

fn run_single(pot: &CompositePotential, cfg: &SamplerConfig, init: &InitStrategy, v: Variant) -> Result<Chain> {
    cfg.validate()?;
    cfg.expect(v)?;
    let sampler = make_init(pot, init, cfg.mu)?;
    run_indexed(pot, cfg, &sampler, sampler_hash(cfg, init), 0)
}

/// `x_{k+1} = x_k − η∂Ū(x_k) + √(2η)ξ_k` (chain 0 of `cfg`).
pub fn run_lmc(pot: &CompositePotential, cfg: &SamplerConfig, init: &InitStrategy) -> Result<Chain> {
    run_single(pot, cfg, init, Variant::Lmc)
}

/// `y_{k+1} = y_k − η∇Ū(y_k + μω_{k−1}) + √(2η)ξ_k` (chain 0 of `cfg`).
pub fn run_plmc(pot: &CompositePotential, cfg: &SamplerConfig, init: &InitStrategy) -> Result<Chain> {
    run_single(pot, cfg, init, Variant::Plmc)
}

/// `y_{k+1} = y_k − η[∇Ū(y_k + μω_{k−1}) − (μ/η)ω_{k−1}] + √(2η)ξ_k`
/// (chain 0 of `cfg`).
pub fn run_slmc(pot: &CompositePotential, cfg: &SamplerConfig, init: &InitStrategy) -> Result<Chain> {
    run_single(pot, cfg, init, Variant::Slmc)
}

/// Runs `cfg.n_chains` chains in parallel and returns all of them, ordered by
/// chain index. On divergence the error of the lowest failing index wins.
pub fn run_chains(pot: &CompositePotential, cfg: &SamplerConfig, init: &InitStrategy) -> Result<Vec<Chain>> {
    cfg.validate()?;
    let sampler = make_init(pot, init, cfg.mu)?;
    let hash = sampler_hash(cfg, init);
    run_chains_with(pot, cfg, &sampler, hash)
}

/// [`run_chains`] with a resolved initial distribution and an explicit hash.
pub fn run_chains_with(pot: &CompositePotential, cfg: &SamplerConfig, init: &InitSampler, hash: u64) -> Result<Vec<Chain>> {
    cfg.validate()?;
    let results: Vec<Result<Chain>> =
        (0..cfg.n_chains).into_par_iter().map(|i| run_indexed(pot, cfg, init, hash, i)).collect();
    results.into_iter().collect()
}

/// Final iterates of [`run_chains`] as a [`SampleSet`].
pub fn run_ensemble(pot: &CompositePotential, cfg: &SamplerConfig, init: &InitStrategy) -> Result<SampleSet> {
    cfg.validate()?;
    let sampler = make_init(pot, init, cfg.mu)?;
    ensemble_with(pot, cfg, &sampler, sampler_hash(cfg, init))
}

/// [`run_ensemble`] with a resolved initial distribution and an explicit hash.
/// Only final states are kept, so memory stays at `n_chains × d`.
pub fn ensemble_with(pot: &CompositePotential, cfg: &SamplerConfig, init: &InitSampler, hash: u64) -> Result<SampleSet> {
    let mut thin = cfg.clone();
    thin.record_every = cfg.k.max(1);
    let chains = run_chains_with(pot, &thin, init, hash)?;
    let d = pot.dim();
    let mut data = Vec::with_capacity(chains.len() * d);
    for c in &chains {
        data.extend_from_slice(&c.final_state);
    }
    SampleSet::new(
        d,
        data,
        SampleMeta { config_hash: hash, seed: cfg.seed, variant: cfg.variant.as_str().to_string() },
    )
}
