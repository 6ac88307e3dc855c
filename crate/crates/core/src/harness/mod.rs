//! Experiment runner behind the `sample` CLI: config → plan → ensemble →
//! metrics → `samples.csv` / `report.json` / `sweep.csv`.

mod config;

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;

pub use config::{
    EnsembleSpec, ExperimentConfig, MetricSpec, MetricsSpec, OutputSpec, PlannerSpec, PotentialKind, PotentialSpec,
    ReferenceSpec, RegularizerSpec, SamplerSpec, SCHEMA_VERSION,
};

use crate::bounds::{self, PlanMode, PlanReport, ProblemConstants};
use crate::error::{Error, Result};
use crate::metrics::{self, quadrature_density_1d, DensityGrid, SampleMeta, SampleSet, TvReference};
use crate::potential::{
    make_bridge_posterior, AbsSum, CompositePotential, DenseMatrix, EuclideanNorm, Potential, Quadratic,
    Regularizer, WeaklySmooth, Zero,
};
use crate::rng::{derive_seed, stream, tag, GaussianSource, NormalStream};
use crate::samplers::{approximate_minimizer, ensemble_with, make_init, InitSampler, InitStrategy, SamplerConfig, Variant};

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "SAMPLE_THREADS";

/// One computed metric with the estimator settings that produced it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricRecord {
    pub name: String,
    pub value: f64,
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bins: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_proj: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InitReport {
    pub center: Vec<f64>,
    pub std: f64,
    pub minimizer_converged: bool,
}

/// Everything a run produced. All fields except `wall_clock_secs` are
/// determined by the config.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub variant: Variant,
    pub dim: usize,
    pub n_chains: usize,
    pub plan: PlanReport,
    pub constants: ProblemConstants,
    pub init: InitReport,
    pub gradient_calls: u64,
    pub metrics: Vec<MetricRecord>,
    pub dry_run: bool,
    pub wall_clock_secs: f64,
}

impl RunReport {
    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|m| m.name == name).map(|m| m.value)
    }

    /// Copy with the wall-clock field zeroed, for reproducibility checks.
    pub fn without_timing(&self) -> Self {
        Self { wall_clock_secs: 0.0, ..self.clone() }
    }
}

/// A finished run: the report, the final iterates and the truth grid if any.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub report: RunReport,
    pub samples: Option<SampleSet>,
    pub truth: Option<DensityGrid>,
}

/// Runs `f` on a pool of `threads` workers, or on the global pool when `None`.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::InvalidArgument(format!("cannot build thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Worker cap from `SAMPLE_THREADS`, if set.
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n >= 1)
            .map(Some)
            .ok_or_else(|| Error::InvalidArgument(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
    }
}

fn dim_of(spec: &PotentialSpec) -> Result<usize> {
    if let Some(d) = spec.dim {
        return Ok(d);
    }
    if let Some(a) = &spec.a_matrix {
        return Ok(a.first().map_or(0, Vec::len));
    }
    if let Some(c) = &spec.center {
        return Ok(c.len());
    }
    if let Some(c) = &spec.regularizer.center {
        return Ok(c.len());
    }
    if let Some(p) = &spec.a_csv {
        return Ok(DenseMatrix::from_csv_path(p)?.cols());
    }
    Err(Error::Config(vec!["potential.dim: missing and not implied by A, center or regularizer.center".into()]))
}

fn build_regularizer(spec: &RegularizerSpec, d: usize, lambda_override: Option<f64>) -> Result<Regularizer> {
    let center = spec.center.clone().unwrap_or_else(|| vec![0.0; d]);
    if let Some(l) = lambda_override {
        return Regularizer::quadratic(l, center);
    }
    match (&spec.curvature, spec.lambda) {
        (Some(c), _) => Regularizer::diagonal(c.clone(), center),
        (None, Some(l)) => Regularizer::quadratic(l, center),
        (None, None) => Err(Error::Config(vec!["potential.regularizer: needs lambda or curvature".into()])),
    }
}

fn read_vector_csv(path: &Path) -> Result<Vec<f64>> {
    let m = DenseMatrix::from_csv_path(path)?;
    let mut v = Vec::with_capacity(m.rows() * m.cols());
    for i in 0..m.rows() {
        v.extend_from_slice(m.row(i));
    }
    Ok(v)
}

/// Builds `Ū` from its spec. `lambda_override` swaps in an isotropic
/// regularizer of that strength (used by the regularized plan).
pub fn build_potential(spec: &PotentialSpec, lambda_override: Option<f64>) -> Result<CompositePotential> {
    let d = dim_of(spec)?;
    let reg = build_regularizer(&spec.regularizer, d, lambda_override)?;
    let weight = spec.weight.unwrap_or(1.0);
    let base: Arc<dyn WeaklySmooth> = match spec.kind {
        PotentialKind::Zero => Arc::new(Zero::new(d)?),
        PotentialKind::Abs => Arc::new(AbsSum::new(d, weight)?),
        PotentialKind::EuclideanNorm => Arc::new(EuclideanNorm::new(d, weight)?),
        PotentialKind::Quadratic => {
            Arc::new(Quadratic::new(spec.a.unwrap_or(1.0), spec.center.clone().unwrap_or_else(|| vec![0.0; d]))?)
        }
        PotentialKind::Bridge => {
            let a = match (&spec.a_matrix, &spec.a_csv) {
                (Some(rows), _) => DenseMatrix::from_rows(rows)?,
                (None, Some(p)) => DenseMatrix::from_csv_path(p)?,
                (None, None) => return Err(Error::Config(vec!["potential.A: bridge needs A or A_csv".into()])),
            };
            let b = match (&spec.b, &spec.b_csv) {
                (Some(b), _) => b.clone(),
                (None, Some(p)) => read_vector_csv(p)?,
                (None, None) => return Err(Error::Config(vec!["potential.b: bridge needs b or b_csv".into()])),
            };
            let gamma = spec.gamma.unwrap_or(1.0);
            let alpha = spec.alpha.ok_or_else(|| Error::Config(vec!["potential.alpha: required for bridge".into()]))?;
            return make_bridge_posterior(a, b, gamma, alpha, reg);
        }
    };
    CompositePotential::new(base, reg)
}

/// `‖c − x̂‖ + √(d·s) + √(d/λ)`: W₂ from `N(c, sI)` to `δ_{x̂}` plus the
/// second-moment bound `E‖X − x*‖² ≤ d/λ` of a λ-strongly log-concave target.
fn default_w2_init(init: &InitStrategy, x_hat: &[f64], m: f64, lambda: f64) -> f64 {
    let d = x_hat.len() as f64;
    let dist = |c: &[f64]| c.iter().zip(x_hat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let (offset, s) = match init {
        InitStrategy::Point { center } => (dist(center), 0.0),
        InitStrategy::Custom { center, scale } => (dist(center), *scale),
        // M_μ ≥ 0, so the default variance (M_μ + m)⁻¹ is at most 1/m.
        InitStrategy::GaussianAtMin { scale } => (0.0, scale.unwrap_or(1.0 / m)),
    };
    offset + (d * s).sqrt() + (d / lambda).sqrt()
}

/// Planner inputs for `pot` under `cfg`.
pub fn problem_constants(cfg: &ExperimentConfig, pot: &CompositePotential) -> ProblemConstants {
    let holder = cfg.potential.certificate.unwrap_or_else(|| pot.holder());
    let m = cfg.potential.regularizer.m.unwrap_or_else(|| pot.smooth_m());
    let lambda = pot.strong_lambda();
    let x_hat = approximate_minimizer(pot).x;
    let x_star_norm = x_hat.iter().map(|v| v * v).sum::<f64>().sqrt();
    let planner = cfg.sampler.planner.as_ref();
    let w2_init = planner
        .and_then(|p| p.w2_init)
        .unwrap_or_else(|| default_w2_init(&cfg.init, &x_hat, m, lambda));
    ProblemConstants {
        d: pot.dim(),
        l: holder.l,
        alpha: holder.alpha,
        m,
        lambda,
        x_star_norm,
        w2_init,
        m4: planner.and_then(|p| p.m4),
    }
}

/// Runs planner `mode` at `eps` on the config's potential.
pub fn plan_for(cfg: &ExperimentConfig, mode: PlanMode, eps: f64) -> Result<PlanReport> {
    let pot = build_potential(&cfg.potential, None)?;
    let consts = problem_constants(cfg, &pot);
    let planner = cfg.sampler.planner.as_ref();
    match mode {
        PlanMode::Explicit => Err(Error::InvalidArgument("explicit is not a planner mode".into())),
        PlanMode::W2 => bounds::plan_w2(eps, &consts),
        PlanMode::Tv => bounds::plan_tv(eps, &consts),
        PlanMode::DetW2 => bounds::plan_det_w2(eps, &consts),
        PlanMode::DetTv => bounds::plan_det_tv(eps, planner.and_then(|p| p.beta).unwrap_or(1.0), &consts),
        PlanMode::Regularized => {
            let dist = planner.and_then(|p| p.x_prime_dist).ok_or_else(|| {
                Error::Config(vec!["sampler.planner.x_prime_dist: required for the regularized plan".into()])
            })?;
            bounds::plan_regularized_tv(eps, dist, &consts)
        }
    }
}

/// Lists every violated invariant of `cfg` without running anything.
pub fn validate(cfg: &ExperimentConfig) -> Vec<String> {
    let mut diag = Vec::new();
    let mut push = |path: &str, msg: String| diag.push(format!("{path}: {msg}"));
    if cfg.schema_version != SCHEMA_VERSION {
        push("schema_version", format!("expected {SCHEMA_VERSION}, got {}", cfg.schema_version));
    }

    let p = &cfg.potential;
    let d = dim_of(p).ok();
    match d {
        None | Some(0) => push("potential.dim", "must be >= 1 (or implied by A / center)".into()),
        Some(d) => {
            for (path, len) in [
                ("potential.center", p.center.as_ref().map(Vec::len)),
                ("potential.regularizer.center", p.regularizer.center.as_ref().map(Vec::len)),
                ("potential.regularizer.curvature", p.regularizer.curvature.as_ref().map(Vec::len)),
            ] {
                if let Some(l) = len.filter(|&l| l != d) {
                    push(path, format!("length {l} does not match dimension {d}"));
                }
            }
            if let InitStrategy::Point { center } | InitStrategy::Custom { center, .. } = &cfg.init {
                if center.len() != d {
                    push("init.center", format!("length {} does not match dimension {d}", center.len()));
                }
            }
            if let Some(ReferenceSpec::Gaussian { mean, .. }) = &cfg.metrics.reference {
                if mean.len() != d {
                    push("metrics.reference.mean", format!("length {} does not match dimension {d}", mean.len()));
                }
            }
            let one_d = cfg.metrics.compute.iter().any(|m| matches!(m, MetricSpec::TvHistogram { .. } | MetricSpec::W2_1d))
                || matches!(cfg.metrics.reference, Some(ReferenceSpec::Quadrature { .. }));
            if one_d && d != 1 {
                push("metrics", format!("histogram TV, w2_1d and quadrature truth need d = 1, got d = {d}"));
            }
        }
    }
    if let Some(w) = p.weight.filter(|w| !(*w >= 0.0 && w.is_finite())) {
        push("potential.weight", format!("must be finite and >= 0, got {w}"));
    }
    let alpha = match p.kind {
        PotentialKind::Bridge => {
            if p.a_matrix.is_none() && p.a_csv.is_none() {
                push("potential.A", "bridge needs A or A_csv".into());
            }
            if p.b.is_none() && p.b_csv.is_none() {
                push("potential.b", "bridge needs b or b_csv".into());
            }
            match p.alpha {
                None => push("potential.alpha", "required for bridge".into()),
                Some(a) if !(0.0..=1.0).contains(&a) => push("potential.alpha", format!("must lie in [0, 1], got {a}")),
                _ => {}
            }
            if p.gamma.unwrap_or(1.0) == 0.0 {
                Some(1.0)
            } else {
                p.alpha
            }
        }
        PotentialKind::Abs | PotentialKind::EuclideanNorm => Some(0.0),
        PotentialKind::Zero | PotentialKind::Quadratic => Some(1.0),
    };
    let alpha = p.certificate.map(|h| h.alpha).or(alpha);
    if let Some(h) = p.certificate {
        if let Err(e) = crate::potential::Holder::new(h.l, h.alpha) {
            push("potential.certificate", e.to_string());
        }
    }

    let r = &p.regularizer;
    let lambda = match (&r.curvature, r.lambda) {
        (Some(c), _) => c.iter().copied().fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.min(v)))),
        (None, l) => l,
    };
    match lambda {
        None => push("potential.regularizer", "needs lambda or curvature".into()),
        Some(l) if !(l > 0.0 && l.is_finite()) => {
            push("potential.regularizer.lambda", format!("must be finite and > 0, got {l}"))
        }
        _ => {}
    }
    if let (Some(m), Some(l)) = (r.m, lambda) {
        if l > m {
            push(
                "potential.regularizer",
                format!("strong convexity exceeds smoothness (lambda = {l} > m = {m})"),
            );
        }
    }
    if let (Some(m), Ok(pot)) = (r.m, build_potential(p, None)) {
        if m < pot.smooth_m() {
            push("potential.regularizer.m", format!("declared m = {m} is below the actual smoothness {}", pot.smooth_m()));
        }
    } else if d.is_some() && lambda.is_some_and(|l| l > 0.0) {
        if let Err(e) = build_potential(p, None) {
            push("potential", e.to_string());
        }
    }

    let s = &cfg.sampler;
    let explicit = s.eta.is_some() || s.k.is_some() || s.mu.is_some();
    match (&s.planner, explicit) {
        (Some(_), true) => push("sampler", "give either explicit eta/mu/K or a planner, not both".into()),
        (None, false) => push("sampler", "needs explicit eta and K, or a planner".into()),
        (None, true) => {
            if s.eta.is_none() {
                push("sampler.eta", "required without a planner".into());
            }
            if s.k.is_none() {
                push("sampler.K", "required without a planner".into());
            }
        }
        (Some(_), false) => {}
    }
    if let Some(eta) = s.eta {
        if !(eta >= 0.0 && eta.is_finite()) {
            push("sampler.eta", format!("must be finite and >= 0, got {eta}"));
        } else if eta == 0.0 && s.variant == Variant::Slmc {
            push("sampler.eta", "S-LMC divides by eta; eta = 0 is rejected".into());
        }
    }
    if let Some(mu) = s.mu.filter(|mu| !(*mu >= 0.0 && mu.is_finite())) {
        push("sampler.mu", format!("must be finite and >= 0, got {mu}"));
    }
    if s.record_every == Some(0) {
        push("sampler.record_every", "must be >= 1".into());
    }
    if let Some(pl) = &s.planner {
        let deterministic = matches!(pl.mode, PlanMode::DetW2 | PlanMode::DetTv);
        if deterministic && alpha == Some(0.0) {
            push(
                "sampler.planner.mode",
                "deterministic plan undefined at alpha = 0: the smoothing bias 2*sqrt(delta*M(delta)) does not shrink with delta".into(),
            );
        }
        if deterministic && s.variant != Variant::Lmc {
            push("sampler.variant", "deterministic plans drive plain LMC".into());
        }
        if pl.mode == PlanMode::Explicit {
            push("sampler.planner.mode", "explicit is not a planner mode".into());
        }
        if !(pl.eps > 0.0) {
            push("sampler.planner.eps", format!("must be > 0, got {}", pl.eps));
        }
        match pl.mode {
            PlanMode::Tv | PlanMode::Regularized if pl.eps > 1.0 => {
                push("sampler.planner.eps", format!("must lie in (0, 1], got {}", pl.eps))
            }
            PlanMode::W2 => {
                if let Some(d) = d.filter(|&d| pl.eps >= (d as f64).powf(0.25)) {
                    push("sampler.planner.eps", format!("must lie in (0, d^(1/4)) = (0, {}), got {}", (d as f64).powf(0.25), pl.eps));
                }
            }
            _ => {}
        }
        if pl.mode == PlanMode::Regularized {
            if pl.m4.is_none() {
                push("sampler.planner.m4", "required for the regularized plan".into());
            }
            if pl.x_prime_dist.is_none() {
                push("sampler.planner.x_prime_dist", "required for the regularized plan".into());
            }
        }
        if pl.beta.is_some_and(|b| b < 1.0) {
            push("sampler.planner.beta", "must be >= 1".into());
        }
    }

    if cfg.ensemble.n_chains == 0 {
        push("ensemble.n_chains", "must be >= 1".into());
    }
    for (i, m) in cfg.metrics.compute.iter().enumerate() {
        let path = format!("metrics.compute[{i}]");
        match m {
            MetricSpec::TvHistogram { n_bins } if *n_bins < 2 => push(&path, "n_bins must be >= 2".into()),
            MetricSpec::SlicedW2 { n_proj, .. } | MetricSpec::SlicedW2Baseline { n_proj, .. } if *n_proj == 0 => {
                push(&path, "n_proj must be >= 1".into())
            }
            MetricSpec::W2Exact if cfg.ensemble.n_chains > metrics::W2_EXACT_MAX_N => {
                push(&path, format!("w2_exact caps n at {}", metrics::W2_EXACT_MAX_N))
            }
            _ => {}
        }
        let needs_reference = !matches!(m, MetricSpec::Moment4 { .. });
        if needs_reference && cfg.metrics.reference.is_none() {
            push(&path, format!("{} needs metrics.reference", m.name()));
        }
    }
    if let Some(ReferenceSpec::Gaussian { std, n, .. }) = &cfg.metrics.reference {
        if !(*std > 0.0) || *n == 0 {
            push("metrics.reference", "gaussian reference needs std > 0 and n >= 1".into());
        }
    }
    diag
}

fn check(cfg: &ExperimentConfig) -> Result<()> {
    let diag = validate(cfg);
    if diag.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(diag))
    }
}

/// Resolved potential, plan and sampler settings of a config.
struct Resolved {
    pot: CompositePotential,
    consts: ProblemConstants,
    plan: PlanReport,
    sampler: SamplerConfig,
    init: InitSampler,
}

fn resolve(cfg: &ExperimentConfig) -> Result<Resolved> {
    check(cfg)?;
    let base_pot = build_potential(&cfg.potential, None)?;
    let consts = problem_constants(cfg, &base_pot);
    let s = &cfg.sampler;
    let (plan, pot) = match &s.planner {
        None => {
            let plan = PlanReport::explicit(s.eta.unwrap_or(0.0), s.mu.unwrap_or(0.0), s.k.unwrap_or(0));
            (plan, base_pot)
        }
        Some(pl) => {
            let plan = plan_for(cfg, pl.mode, pl.eps)?;
            let pot = match plan.lambda_reg {
                Some(l) => build_potential(&cfg.potential, Some(l))?,
                None => base_pot,
            };
            (plan, pot)
        }
    };
    let sampler = SamplerConfig {
        variant: s.variant,
        eta: plan.eta,
        mu: if s.variant == Variant::Lmc { 0.0 } else { plan.mu },
        k: plan.k,
        seed: cfg.ensemble.seed,
        n_chains: cfg.ensemble.n_chains,
        record_every: s.record_every.unwrap_or(1),
    };
    let init_strategy = match (&cfg.init, plan.intermediates.get("M")) {
        (InitStrategy::GaussianAtMin { scale: None }, Some(&big_m)) if plan.delta.is_some() => {
            InitStrategy::GaussianAtMin { scale: Some(1.0 / (big_m + consts.m)) }
        }
        (other, _) => other.clone(),
    };
    let init = make_init(&pot, &init_strategy, sampler.mu)?;
    Ok(Resolved { pot, consts, plan, sampler, init })
}

fn reference_draws(spec: &ReferenceSpec, truth: Option<&DensityGrid>, n_default: usize, seed: u64, baseline: bool) -> Result<SampleSet> {
    let tag_ = if baseline { tag::BASELINE } else { tag::REFERENCE };
    match spec {
        ReferenceSpec::Quadrature { n, .. } => {
            let g = truth.expect("quadrature truth is built before draws");
            let xs = g.sample(n.unwrap_or(n_default), derive_seed(seed, tag_, 0));
            SampleSet::from_scalars(&xs)
        }
        ReferenceSpec::Gaussian { mean, std, n, seed: s } => {
            let mut noise = NormalStream::new(stream(s.unwrap_or(seed), tag_, 0));
            let d = mean.len();
            let mut data = vec![0.0; n * d];
            for row in data.chunks_exact_mut(d) {
                noise.fill_normal(row);
                for (x, m) in row.iter_mut().zip(mean) {
                    *x = m + std * *x;
                }
            }
            SampleSet::new(d, data, SampleMeta::default())
        }
    }
}

fn compute_metrics(
    cfg: &ExperimentConfig,
    samples: &SampleSet,
    truth: Option<&DensityGrid>,
) -> Result<Vec<MetricRecord>> {
    let seed = cfg.ensemble.seed;
    let spec = &cfg.metrics;
    let n = samples.n();
    let mut reference = None;
    let mut baseline = None;
    let reference_set = |baseline_draw: bool| -> Result<SampleSet> {
        let r = spec.reference.as_ref().ok_or_else(|| Error::Config(vec!["metrics.reference: missing".into()]))?;
        reference_draws(r, truth, n, seed, baseline_draw)
    };
    let mut out = Vec::with_capacity(spec.compute.len());
    for m in &spec.compute {
        let rec = |value: f64, n: usize| MetricRecord { name: m.name().into(), value, n, bins: None, n_proj: None, seed: None };
        let record = match m {
            MetricSpec::TvHistogram { n_bins } => {
                let value = match truth {
                    Some(g) => metrics::tv_histogram(samples, TvReference::Density(g), *n_bins)?,
                    None => {
                        if reference.is_none() {
                            reference = Some(reference_set(false)?);
                        }
                        metrics::tv_histogram(samples, TvReference::Samples(reference.as_ref().unwrap()), *n_bins)?
                    }
                };
                MetricRecord { bins: Some(*n_bins), ..rec(value, n) }
            }
            MetricSpec::SlicedW2 { n_proj, seed: s } => {
                if reference.is_none() {
                    reference = Some(reference_set(false)?);
                }
                let s = s.unwrap_or(seed);
                let value = metrics::w2_sliced(samples, reference.as_ref().unwrap(), *n_proj, s)?;
                MetricRecord { n_proj: Some(*n_proj), seed: Some(s), ..rec(value, n) }
            }
            MetricSpec::SlicedW2Baseline { n_proj, seed: s } => {
                if reference.is_none() {
                    reference = Some(reference_set(false)?);
                }
                if baseline.is_none() {
                    baseline = Some(reference_set(true)?);
                }
                let s = s.unwrap_or(seed);
                let (a, b) = (reference.as_ref().unwrap(), baseline.as_ref().unwrap());
                let value = metrics::w2_sliced(a, b, *n_proj, s)?;
                MetricRecord { n_proj: Some(*n_proj), seed: Some(s), ..rec(value, a.n()) }
            }
            MetricSpec::W2_1d => {
                if reference.is_none() {
                    reference = Some(reference_set(false)?);
                }
                rec(metrics::w2_1d(samples, reference.as_ref().unwrap())?, n)
            }
            MetricSpec::W2Exact => {
                if reference.is_none() {
                    reference = Some(reference_set(false)?);
                }
                rec(metrics::w2_exact(samples, reference.as_ref().unwrap())?, n)
            }
            MetricSpec::Moment4 { center } => {
                let c = center.clone().unwrap_or_else(|| vec![0.0; samples.d()]);
                rec(metrics::moment4(samples, &c)?, n)
            }
        };
        out.push(record);
    }
    Ok(out)
}

/// Resolves the plan, runs the ensemble and evaluates the metrics. Nothing
/// is written to disk.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let start = Instant::now();
    let r = resolve(cfg)?;
    let hash = cfg.hash();
    let truth = match &cfg.metrics.reference {
        Some(ReferenceSpec::Quadrature { span, n_cells, .. }) if !cfg.dry_run => {
            Some(quadrature_density_1d(&r.pot, *span, *n_cells)?)
        }
        _ => None,
    };
    let (samples, metrics, grad_calls) = if cfg.dry_run {
        (None, Vec::new(), 0)
    } else {
        let samples = ensemble_with(&r.pot, &r.sampler, &r.init, hash)?;
        let metrics = compute_metrics(cfg, &samples, truth.as_ref())?;
        (Some(samples), metrics, r.sampler.k.saturating_mul(r.sampler.n_chains as u64))
    };
    let report = RunReport {
        schema_version: SCHEMA_VERSION,
        config_hash: crate::hash::hex(hash),
        seed: cfg.ensemble.seed,
        variant: cfg.sampler.variant,
        dim: r.pot.dim(),
        n_chains: cfg.ensemble.n_chains,
        plan: r.plan,
        constants: r.consts,
        init: InitReport { center: r.init.center, std: r.init.std, minimizer_converged: r.init.minimizer_converged },
        gradient_calls: grad_calls,
        metrics,
        dry_run: cfg.dry_run,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    };
    Ok(RunOutput { report, samples, truth })
}

/// Writes `samples.csv`, `report.json` and, with a quadrature reference,
/// `truth.csv` into `dir`.
pub fn write_run(out: &RunOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    if let Some(s) = &out.samples {
        s.write_csv(&dir.join("samples.csv"))?;
    }
    if let Some(t) = &out.truth {
        std::fs::write(dir.join("truth.csv"), t.to_csv())?;
    }
    let mut json = serde_json::to_string_pretty(&out.report)?;
    json.push('\n');
    std::fs::write(dir.join("report.json"), json)?;
    Ok(())
}

/// Parameter a sweep varies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepAxis {
    K,
    Eta,
    Mu,
    Alpha,
    NChains,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::K => "K",
            SweepAxis::Eta => "eta",
            SweepAxis::Mu => "mu",
            SweepAxis::Alpha => "alpha",
            SweepAxis::NChains => "n_chains",
        }
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "K" | "k" => Ok(SweepAxis::K),
            "eta" => Ok(SweepAxis::Eta),
            "mu" => Ok(SweepAxis::Mu),
            "alpha" => Ok(SweepAxis::Alpha),
            "n_chains" => Ok(SweepAxis::NChains),
            other => Err(Error::InvalidArgument(format!("invalid sweep axis {other:?}; expected K, eta, mu, alpha or n_chains"))),
        }
    }
}

fn as_count(axis: SweepAxis, v: f64) -> Result<u64> {
    if v >= 0.0 && v.fract() == 0.0 && v < 9.0e15 {
        Ok(v as u64)
    } else {
        Err(Error::InvalidArgument(format!("{} takes nonnegative integers, got {v}", axis.as_str())))
    }
}

/// Copy of `cfg` with `axis` set to `value`.
pub fn apply_axis(cfg: &ExperimentConfig, axis: SweepAxis, value: f64) -> Result<ExperimentConfig> {
    let mut c = cfg.clone();
    let explicit = |c: &ExperimentConfig| {
        if c.sampler.planner.is_some() {
            Err(Error::InvalidArgument(format!("sweeping {} needs explicit sampler parameters", axis.as_str())))
        } else {
            Ok(())
        }
    };
    match axis {
        SweepAxis::K => {
            explicit(&c)?;
            c.sampler.k = Some(as_count(axis, value)?);
        }
        SweepAxis::Eta => {
            explicit(&c)?;
            c.sampler.eta = Some(value);
        }
        SweepAxis::Mu => {
            explicit(&c)?;
            c.sampler.mu = Some(value);
        }
        SweepAxis::Alpha => {
            if c.potential.kind != PotentialKind::Bridge {
                return Err(Error::InvalidArgument("sweeping alpha needs a bridge potential".into()));
            }
            c.potential.alpha = Some(value);
        }
        SweepAxis::NChains => c.ensemble.n_chains = as_count(axis, value)? as usize,
    }
    Ok(c)
}

/// Sweep result: one report per value, in input order.
#[derive(Clone, Debug)]
pub struct SweepTable {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub metric_names: Vec<String>,
    pub reports: Vec<RunReport>,
}

impl SweepTable {
    /// `axis,value,<metrics…>,eta,mu,K,gradient_calls,config_hash`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("axis,value");
        for m in &self.metric_names {
            s.push(',');
            s.push_str(m);
        }
        s.push_str(",eta,mu,K,gradient_calls,config_hash\n");
        for (v, r) in self.values.iter().zip(&self.reports) {
            let _ = write!(s, "{},{v:?}", self.axis.as_str());
            for m in &self.metric_names {
                match r.metric(m) {
                    Some(x) => {
                        let _ = write!(s, ",{x:?}");
                    }
                    None => s.push(','),
                }
            }
            let _ = writeln!(s, ",{:?},{:?},{},{},{}", r.plan.eta, r.plan.mu, r.plan.k, r.gradient_calls, r.config_hash);
        }
        s
    }
}

/// Runs `cfg` once per value of `axis`. Rows run one after another; each
/// run parallelizes over its chains.
pub fn sweep(cfg: &ExperimentConfig, axis: SweepAxis, values: &[f64]) -> Result<SweepTable> {
    let configs: Vec<ExperimentConfig> = values.iter().map(|&v| apply_axis(cfg, axis, v)).collect::<Result<_>>()?;
    let mut reports = Vec::with_capacity(configs.len());
    for c in &configs {
        reports.push(run_experiment(c)?.report);
    }
    Ok(SweepTable {
        axis,
        values: values.to_vec(),
        metric_names: cfg.metrics.compute.iter().map(|m| m.name().to_string()).collect(),
        reports,
    })
}

/// Parses a comma-separated list of sweep values.
pub fn parse_values(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|t| {
            t.trim().parse::<f64>().map_err(|e| Error::InvalidArgument(format!("bad sweep value {t:?}: {e}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> ExperimentConfig {
        ExperimentConfig::from_json(
            r#"{"schema_version": 1,
                "potential": {"kind": "zero", "dim": 1, "regularizer": {"lambda": 1.0}},
                "sampler": {"variant": "LMC", "eta": 0.01, "K": 100},
                "init": {"kind": "point", "center": [0.0]},
                "ensemble": {"n_chains": 8, "seed": 1}}"#,
        )
        .unwrap()
    }

    #[test]
    fn minimal_run_has_eight_rows() {
        let out = run_experiment(&minimal()).unwrap();
        assert_eq!(out.samples.unwrap().n(), 8);
        assert_eq!(out.report.gradient_calls, 800);
        assert_eq!(out.report.plan.mode, PlanMode::Explicit);
    }

    #[test]
    fn clean_config_has_no_diagnostics() {
        assert!(validate(&minimal()).is_empty());
    }

    #[test]
    fn lambda_above_declared_m_is_flagged() {
        let mut c = minimal();
        c.potential.regularizer.m = Some(0.5);
        let d = validate(&c);
        assert!(d.iter().any(|s| s.contains("strong convexity exceeds smoothness")), "{d:?}");
    }

    #[test]
    fn deterministic_plan_at_alpha_zero_is_flagged() {
        let mut c = minimal();
        c.potential.kind = PotentialKind::Abs;
        c.sampler.eta = None;
        c.sampler.k = None;
        c.sampler.planner =
            Some(PlannerSpec { mode: PlanMode::DetW2, eps: 0.5, beta: None, w2_init: None, m4: None, x_prime_dist: None });
        let d = validate(&c);
        assert!(d.iter().any(|s| s.contains("deterministic plan undefined at alpha = 0")), "{d:?}");
    }

    #[test]
    fn explicit_and_planner_together_are_flagged() {
        let mut c = minimal();
        c.sampler.planner =
            Some(PlannerSpec { mode: PlanMode::Tv, eps: 0.5, beta: None, w2_init: None, m4: None, x_prime_dist: None });
        assert!(!validate(&c).is_empty());
    }

    #[test]
    fn sweep_axis_parsing() {
        assert_eq!("K".parse::<SweepAxis>().unwrap(), SweepAxis::K);
        assert!("gamma".parse::<SweepAxis>().is_err());
        assert_eq!(parse_values("100, 1000,1e4").unwrap(), vec![100.0, 1000.0, 10000.0]);
    }

    #[test]
    fn sweep_rejects_alpha_on_non_bridge() {
        assert!(apply_axis(&minimal(), SweepAxis::Alpha, 0.5).is_err());
        assert!(apply_axis(&minimal(), SweepAxis::K, 2.5).is_err());
    }
}
