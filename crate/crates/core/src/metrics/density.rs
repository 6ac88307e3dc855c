//! One-dimensional truth densities `p̄ ∝ e^{−Ū}` by composite Simpson quadrature.

use std::fmt::Write as _;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::potential::{CompositePotential, Potential};
use crate::rng::{stream, tag};

/// Largest mass the Gaussian envelope may leave outside the span.
pub const MAX_TAIL_MASS: f64 = 1e-6;

/// Normalized density on `n` equal cells of `[lo, hi]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DensityGrid {
    /// `n + 1` strictly increasing cell edges.
    pub edges: Vec<f64>,
    /// Cell midpoints.
    pub centers: Vec<f64>,
    /// Normalized density at the midpoints.
    pub density: Vec<f64>,
    /// Normalized cell masses (sum to 1).
    pub cell_mass: Vec<f64>,
    /// Upper bound on the target mass outside `[lo, hi]`.
    pub tail_bound: f64,
}

impl DensityGrid {
    pub fn lo(&self) -> f64 {
        self.edges[0]
    }

    pub fn hi(&self) -> f64 {
        self.edges[self.edges.len() - 1]
    }

    /// Mass of `[a, b]`, treating the density as uniform inside each cell.
    pub fn mass_between(&self, a: f64, b: f64) -> f64 {
        let mut m = 0.0;
        for (i, &w) in self.cell_mass.iter().enumerate() {
            let (l, r) = (self.edges[i], self.edges[i + 1]);
            let overlap = r.min(b) - l.max(a);
            if overlap > 0.0 {
                m += w * overlap / (r - l);
            }
        }
        m
    }

    /// `n` inverse-CDF draws (uniform within a cell) from a seeded stream.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut cdf = Vec::with_capacity(self.cell_mass.len());
        let mut acc = 0.0;
        for w in &self.cell_mass {
            acc += w;
            cdf.push(acc);
        }
        let total = acc;
        let mut rng = stream(seed, tag::REFERENCE, 0);
        (0..n)
            .map(|_| {
                let u: f64 = rng.random::<f64>() * total;
                let i = cdf.partition_point(|&c| c < u).min(cdf.len() - 1);
                let prev = if i == 0 { 0.0 } else { cdf[i - 1] };
                let frac = if self.cell_mass[i] > 0.0 { ((u - prev) / self.cell_mass[i]).clamp(0.0, 1.0) } else { 0.5 };
                self.edges[i] + frac * (self.edges[i + 1] - self.edges[i])
            })
            .collect()
    }

    /// CSV with columns `x,density,cell_mass` (cell midpoints).
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,density,cell_mass\n");
        for i in 0..self.centers.len() {
            let _ = writeln!(s, "{:?},{:?},{:?}", self.centers[i], self.density[i], self.cell_mass[i]);
        }
        s
    }
}

/// Composite Simpson quadrature of `e^{−Ū}` on `n_cells` equal cells of
/// `span`, normalized to unit mass.
///
/// The tail outside the span is bounded with the strong-convexity envelope
/// `Ū(x) ≥ Ū(x̂) + (λ/2)(x − x̂)²` around the best grid node `x̂`; spans that
/// leave more than [`MAX_TAIL_MASS`] outside are rejected.
pub fn quadrature_density_1d(pot: &CompositePotential, span: (f64, f64), n_cells: usize) -> Result<DensityGrid> {
    if pot.dim() != 1 {
        return Err(Error::InvalidArgument(format!("quadrature truth needs d = 1, got d = {}", pot.dim())));
    }
    let (lo, hi) = span;
    if !(lo < hi && lo.is_finite() && hi.is_finite()) {
        return Err(Error::InvalidArgument(format!("invalid span [{lo}, {hi}]")));
    }
    if n_cells < 1 {
        return Err(Error::InvalidArgument("n_cells must be >= 1".into()));
    }
    let h = (hi - lo) / n_cells as f64;
    let edges: Vec<f64> = (0..=n_cells).map(|i| if i == n_cells { hi } else { lo + i as f64 * h }).collect();
    let centers: Vec<f64> = edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let u_edge: Vec<f64> = edges.iter().map(|&x| pot.value(&[x])).collect();
    let u_mid: Vec<f64> = centers.iter().map(|&x| pot.value(&[x])).collect();
    if u_edge.iter().chain(&u_mid).any(|u| !u.is_finite()) {
        return Err(Error::Range("potential is not finite on the quadrature span".into()));
    }
    let (mut u_min, mut x_hat) = (f64::INFINITY, lo);
    for (&u, &x) in u_edge.iter().zip(&edges).chain(u_mid.iter().zip(&centers)) {
        if u < u_min {
            u_min = u;
            x_hat = x;
        }
    }
    let mut raw = Vec::with_capacity(n_cells);
    for i in 0..n_cells {
        let w = edges[i + 1] - edges[i];
        let f = |u: f64| (u_min - u).exp();
        raw.push(w / 6.0 * (f(u_edge[i]) + 4.0 * f(u_mid[i]) + f(u_edge[i + 1])));
    }
    let z: f64 = raw.iter().sum();
    if !(z > 0.0 && z.is_finite()) {
        return Err(Error::Range(format!("normalizing constant is not finite and positive ({z})")));
    }
    let lambda = pot.strong_lambda();
    let s = lambda.sqrt();
    let tail_unnormalized = (2.0 * std::f64::consts::PI / lambda).sqrt()
        * 0.5
        * (libm::erfc((hi - x_hat) * s / std::f64::consts::SQRT_2) + libm::erfc((x_hat - lo) * s / std::f64::consts::SQRT_2));
    let tail_bound = tail_unnormalized / z;
    if tail_bound > MAX_TAIL_MASS {
        return Err(Error::InvalidArgument(format!(
            "span [{lo}, {hi}] leaves up to {tail_bound:e} of the mass outside (limit {MAX_TAIL_MASS:e})"
        )));
    }
    let cell_mass: Vec<f64> = raw.iter().map(|r| r / z).collect();
    let density: Vec<f64> = u_mid.iter().map(|&u| (u_min - u).exp() / z).collect();
    Ok(DensityGrid { edges, centers, density, cell_mass, tail_bound })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::potential::{AbsSum, Regularizer, Zero};

    fn phi(x: f64) -> f64 {
        0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
    }

    fn std_normal() -> CompositePotential {
        CompositePotential::new(Arc::new(Zero::new(1).unwrap()), Regularizer::quadratic(1.0, vec![0.0]).unwrap()).unwrap()
    }

    #[test]
    fn gaussian_masses_match_erf() {
        let g = quadrature_density_1d(&std_normal(), (-10.0, 10.0), 4000).unwrap();
        assert!((g.cell_mass.iter().sum::<f64>() - 1.0).abs() <= 1e-8);
        for i in 0..4000 {
            let exact = phi(g.edges[i + 1]) - phi(g.edges[i]);
            assert!((g.cell_mass[i] - exact).abs() <= 1e-8, "cell {i}");
        }
        let peak = g.density[1999];
        assert!((peak - (-0.5 * g.centers[1999].powi(2)).exp() / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-9);
    }

    #[test]
    fn abs_plus_quadratic_is_symmetric_with_mode_at_zero() {
        let p = CompositePotential::new(Arc::new(AbsSum::new(1, 1.0).unwrap()), Regularizer::quadratic(1.0, vec![0.0]).unwrap())
            .unwrap();
        let g = quadrature_density_1d(&p, (-10.0, 10.0), 4000).unwrap();
        for i in 0..2000 {
            assert!((g.cell_mass[i] - g.cell_mass[3999 - i]).abs() <= 1e-12 * g.cell_mass[i]);
        }
        let mode = g.density.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert!(g.centers[mode].abs() <= g.edges[1] - g.edges[0]);
    }

    #[test]
    fn narrow_span_is_rejected() {
        assert!(quadrature_density_1d(&std_normal(), (-2.0, 2.0), 100).is_err());
        assert!(quadrature_density_1d(&std_normal(), (1.0, 1.0), 100).is_err());
    }

    #[test]
    fn inverse_cdf_draws_have_unit_variance() {
        let g = quadrature_density_1d(&std_normal(), (-10.0, 10.0), 4000).unwrap();
        let s = g.sample(20000, 3);
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        let var = s.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / s.len() as f64;
        assert!(mean.abs() < 0.04 && (var - 1.0).abs() < 0.05, "{mean} {var}");
        assert_eq!(s, g.sample(20000, 3));
    }

    #[test]
    fn csv_has_header_and_rows() {
        let g = quadrature_density_1d(&std_normal(), (-10.0, 10.0), 10).unwrap();
        let csv = g.to_csv();
        assert!(csv.starts_with("x,density,cell_mass\n"));
        assert_eq!(csv.lines().count(), g.centers.len() + 1);
    }
}
