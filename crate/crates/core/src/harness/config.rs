//! JSON experiment configuration and its validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bounds::PlanMode;
use crate::potential::Holder;
use crate::samplers::{InitStrategy, Variant};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub potential: PotentialSpec,
    pub sampler: SamplerSpec,
    #[serde(default = "default_init")]
    pub init: InitStrategy,
    pub ensemble: EnsembleSpec,
    #[serde(default)]
    pub metrics: MetricsSpec,
    /// Not part of the config hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSpec>,
    /// Resolve the plan and report it without sampling.
    #[serde(default)]
    pub dry_run: bool,
}

fn default_init() -> InitStrategy {
    InitStrategy::GaussianAtMin { scale: None }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    Zero,
    Abs,
    EuclideanNorm,
    Quadratic,
    Bridge,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    pub kind: PotentialKind,
    /// Dimension; bridge potentials may take it from `A` instead.
    #[serde(default)]
    pub dim: Option<usize>,
    /// Weight of `abs` and `euclidean_norm`.
    #[serde(default)]
    pub weight: Option<f64>,
    /// Curvature of `quadratic`.
    #[serde(default)]
    pub a: Option<f64>,
    /// Center of `quadratic`.
    #[serde(default)]
    pub center: Option<Vec<f64>>,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default, rename = "A")]
    pub a_matrix: Option<Vec<Vec<f64>>>,
    #[serde(default, rename = "A_csv")]
    pub a_csv: Option<PathBuf>,
    #[serde(default)]
    pub b: Option<Vec<f64>>,
    #[serde(default)]
    pub b_csv: Option<PathBuf>,
    /// Declared `(L, α)` used by planners instead of the built-in one.
    #[serde(default)]
    pub certificate: Option<Holder>,
    pub regularizer: RegularizerSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularizerSpec {
    /// Isotropic curvature; ignored when `curvature` is given.
    #[serde(default)]
    pub lambda: Option<f64>,
    /// Per-axis curvatures.
    #[serde(default)]
    pub curvature: Option<Vec<f64>>,
    /// Declared smoothness used by planners (must dominate the actual one).
    #[serde(default)]
    pub m: Option<f64>,
    /// Center `x′`; defaults to the origin.
    #[serde(default)]
    pub center: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSpec {
    pub variant: Variant,
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default)]
    pub mu: Option<f64>,
    #[serde(default, rename = "K")]
    pub k: Option<u64>,
    #[serde(default)]
    pub record_every: Option<u64>,
    #[serde(default)]
    pub planner: Option<PlannerSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerSpec {
    pub mode: PlanMode,
    pub eps: f64,
    /// Warm-start factor for `det-tv`.
    #[serde(default)]
    pub beta: Option<f64>,
    /// Initial W₂ distance; a default bound is derived from the init.
    #[serde(default)]
    pub w2_init: Option<f64>,
    /// Fourth moment for `regularized`.
    #[serde(default)]
    pub m4: Option<f64>,
    /// `‖x′ − x*‖` for `regularized`.
    #[serde(default)]
    pub x_prime_dist: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    pub n_chains: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSpec {
    #[serde(default)]
    pub reference: Option<ReferenceSpec>,
    #[serde(default)]
    pub compute: Vec<MetricSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferenceSpec {
    /// 1-D truth by quadrature; reference draws come from its inverse CDF.
    Quadrature {
        span: (f64, f64),
        n_cells: usize,
        #[serde(default)]
        n: Option<usize>,
    },
    /// `N(mean, std²·I)` draws.
    Gaussian {
        mean: Vec<f64>,
        std: f64,
        n: usize,
        #[serde(default)]
        seed: Option<u64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MetricSpec {
    TvHistogram { n_bins: usize },
    SlicedW2 { n_proj: usize, #[serde(default)] seed: Option<u64> },
    /// Sliced W₂ between two independent reference draws.
    SlicedW2Baseline { n_proj: usize, #[serde(default)] seed: Option<u64> },
    W2_1d,
    W2Exact,
    Moment4 { #[serde(default)] center: Option<Vec<f64>> },
}

impl MetricSpec {
    pub fn name(&self) -> &'static str {
        match self {
            MetricSpec::TvHistogram { .. } => "tv_histogram",
            MetricSpec::SlicedW2 { .. } => "sliced_w2",
            MetricSpec::SlicedW2Baseline { .. } => "sliced_w2_baseline",
            MetricSpec::W2_1d => "w2_1d",
            MetricSpec::W2Exact => "w2_exact",
            MetricSpec::Moment4 { .. } => "moment4",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> crate::Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Reads a config; relative CSV paths inside it resolve against the
    /// config's directory.
    pub fn from_path(path: &Path) -> crate::Result<Self> {
        let mut cfg = Self::from_json(&std::fs::read_to_string(path)?)?;
        if let Some(dir) = path.parent() {
            for p in [&mut cfg.potential.a_csv, &mut cfg.potential.b_csv].into_iter().flatten() {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    /// 64-bit FNV-1a of the canonical JSON without `output`.
    pub fn hash(&self) -> u64 {
        let mut c = self.clone();
        c.output = None;
        crate::hash::config_hash(&c).expect("config serializes")
    }

    pub fn is_planned(&self) -> bool {
        self.sampler.planner.is_some()
    }
}
