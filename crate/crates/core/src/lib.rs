//! Perturbed Langevin Monte Carlo for log-concave targets whose potentials have
//! Hölder-continuous (possibly discontinuous) subgradients.
//!
//! Modules:
//! - [`potential`]: weakly smooth potentials, regularizers and composites.
//! - [`smoothing`]: Gaussian-smoothing gradient estimators and value oracles.
//! - [`samplers`]: LMC, P-LMC and S-LMC chains plus ensemble execution.
//! - [`bounds`]: closed-form constants, error bounds and parameter planners.
//! - [`metrics`]: sample sets, Wasserstein/TV estimators, 1-D quadrature truth.
//! - [`harness`]: JSON experiment configs, runs, sweeps and reports.

pub mod bounds;
mod error;
pub mod harness;
pub mod hash;
pub mod metrics;
pub mod potential;
pub mod rng;
pub mod samplers;
pub mod smoothing;

pub use error::{Error, Result};
