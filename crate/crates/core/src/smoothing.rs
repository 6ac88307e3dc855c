//! Gaussian smoothing `Ū_μ(y) = E[Ū(y + μξ)]`, `ξ ~ N(0, I)`.
//!
//! Gradient estimators evaluate the subgradient at a single perturbed point.
//! Closed forms for tests live only in [`smoothed_value_closed`].

use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::potential::Potential;
use crate::rng::fill_normal;

/// One draw of a smoothed-gradient estimator together with the perturbation
/// `z` that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct StochasticGradSample {
    pub grad: Vec<f64>,
    pub z: Vec<f64>,
}

/// Which unbiased estimator of `∇Ū_μ` to draw.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GradientEstimator {
    /// `∇Ū(x + μz)`.
    Perturbed,
    /// `∇Ū(x + μz) − (μ/η)z`.
    Shifted { eta: f64 },
}

/// Monte Carlo mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
}

/// Normalized estimator variance `(1/d)·Σⱼ Var(Gⱼ)` with a standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VarianceEstimate {
    pub sigma2: f64,
    pub stderr: f64,
}

fn check_mu(mu: f64) -> Result<()> {
    if mu >= 0.0 && mu.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("smoothing radius must be finite and >= 0, got {mu}")))
    }
}

fn check_eta(eta: f64) -> Result<()> {
    if eta > 0.0 && eta.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("step size must be finite and > 0, got {eta}")))
    }
}

/// Subgradient at `x + μz` written into `grad`; `point` is scratch.
fn perturbed_grad<P: Potential + ?Sized>(pot: &P, x: &[f64], mu: f64, z: &[f64], point: &mut [f64], grad: &mut [f64]) {
    if mu == 0.0 {
        pot.subgrad_into(x, grad);
    } else {
        for ((p, &xi), &zi) in point.iter_mut().zip(x).zip(z) {
            *p = xi + mu * zi;
        }
        pot.subgrad_into(point, grad);
    }
}

fn draw<P: Potential + ?Sized, R: Rng + ?Sized>(
    pot: &P,
    x: &[f64],
    mu: f64,
    estimator: GradientEstimator,
    rng: &mut R,
    point: &mut [f64],
    z: &mut [f64],
    grad: &mut [f64],
) {
    fill_normal(rng, z);
    perturbed_grad(pot, x, mu, z, point, grad);
    if let GradientEstimator::Shifted { eta } = estimator {
        let k = mu / eta;
        for (g, &zi) in grad.iter_mut().zip(z.iter()) {
            *g -= k * zi;
        }
    }
}

/// `g = ∇Ū(x + μz)` with a fresh `z ~ N(0, I)`; unbiased for `∇Ū_μ(x)`.
pub fn stochastic_grad<P: Potential + ?Sized, R: Rng + ?Sized>(
    pot: &P,
    x: &[f64],
    mu: f64,
    rng: &mut R,
) -> Result<StochasticGradSample> {
    estimator_draw(pot, x, mu, GradientEstimator::Perturbed, rng)
}

/// `g = ∇Ū(x + μz) − (μ/η)z`; also unbiased for `∇Ū_μ(x)`.
pub fn shifted_stochastic_grad<P: Potential + ?Sized, R: Rng + ?Sized>(
    pot: &P,
    x: &[f64],
    mu: f64,
    eta: f64,
    rng: &mut R,
) -> Result<StochasticGradSample> {
    check_eta(eta)?;
    estimator_draw(pot, x, mu, GradientEstimator::Shifted { eta }, rng)
}

fn estimator_draw<P: Potential + ?Sized, R: Rng + ?Sized>(
    pot: &P,
    x: &[f64],
    mu: f64,
    estimator: GradientEstimator,
    rng: &mut R,
) -> Result<StochasticGradSample> {
    check_dim(pot.dim(), x.len())?;
    check_mu(mu)?;
    let d = x.len();
    let mut point = vec![0.0; d];
    let mut z = vec![0.0; d];
    let mut grad = vec![0.0; d];
    draw(pot, x, mu, estimator, rng, &mut point, &mut z, &mut grad);
    Ok(StochasticGradSample { grad, z })
}

/// Sample mean of `Ū(x + μξᵢ)` over `n` draws, with its standard error.
pub fn smoothed_value_mc<P: Potential + ?Sized, R: Rng + ?Sized>(
    pot: &P,
    x: &[f64],
    mu: f64,
    n: usize,
    rng: &mut R,
) -> Result<McEstimate> {
    check_dim(pot.dim(), x.len())?;
    check_mu(mu)?;
    if n < 2 {
        return Err(Error::InvalidArgument("need at least 2 samples".into()));
    }
    if mu == 0.0 {
        return Ok(McEstimate { estimate: pot.value(x), stderr: 0.0 });
    }
    let d = x.len();
    let mut z = vec![0.0; d];
    let mut point = vec![0.0; d];
    let (mut mean, mut m2) = (0.0, 0.0);
    for i in 0..n {
        fill_normal(rng, &mut z);
        for ((p, &xi), &zi) in point.iter_mut().zip(x).zip(&z) {
            *p = xi + mu * zi;
        }
        let v = pot.value(&point);
        let delta = v - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (v - mean);
    }
    let var = m2 / (n - 1) as f64;
    Ok(McEstimate { estimate: mean, stderr: (var / n as f64).sqrt() })
}

/// Potentials whose Gaussian smoothing has a closed form.
#[derive(Clone, Debug, PartialEq)]
pub enum ClosedForm {
    /// `½a‖x − c‖²`.
    Quadratic { a: f64, center: Vec<f64> },
    /// `|x|` on ℝ.
    Abs1d,
}

/// Exact `U_μ(x)` for the supported closed forms.
pub fn smoothed_value_closed(kind: &ClosedForm, x: &[f64], mu: f64) -> Result<f64> {
    check_mu(mu)?;
    match kind {
        ClosedForm::Quadratic { a, center } => {
            check_dim(center.len(), x.len())?;
            let s: f64 = x.iter().zip(center).map(|(v, c)| (v - c) * (v - c)).sum();
            Ok(0.5 * a * s + 0.5 * a * mu * mu * x.len() as f64)
        }
        ClosedForm::Abs1d => {
            check_dim(1, x.len())?;
            let t = x[0];
            if mu == 0.0 {
                return Ok(t.abs());
            }
            let gauss = (-t * t / (2.0 * mu * mu)).exp();
            Ok(t * libm::erf(t / (std::f64::consts::SQRT_2 * mu))
                + mu * (2.0 / std::f64::consts::PI).sqrt() * gauss)
        }
    }
}

/// Normalized variance of the perturbed estimator `∇Ū(x + μz)`.
pub fn variance_estimate<P: Potential + ?Sized, R: Rng + ?Sized>(
    pot: &P,
    x: &[f64],
    mu: f64,
    n: usize,
    rng: &mut R,
) -> Result<VarianceEstimate> {
    estimator_variance(pot, x, mu, GradientEstimator::Perturbed, n, 1, rng)
}

/// Normalized variance `(1/d)·Σⱼ Var(Gⱼ)` of a gradient estimator over `n`
/// draws. Each draw averages `batch` independent estimator samples; this is a
/// diagnostic only and is never used by the chains.
///
/// The standard error treats the per-draw squared deviations
/// `‖Gᵢ − Ḡ‖²/d` as i.i.d.
pub fn estimator_variance<P: Potential + ?Sized, R: Rng + ?Sized>(
    pot: &P,
    x: &[f64],
    mu: f64,
    estimator: GradientEstimator,
    n: usize,
    batch: usize,
    rng: &mut R,
) -> Result<VarianceEstimate> {
    check_dim(pot.dim(), x.len())?;
    check_mu(mu)?;
    if let GradientEstimator::Shifted { eta } = estimator {
        check_eta(eta)?;
    }
    if n < 2 {
        return Err(Error::InvalidArgument("need at least 2 samples".into()));
    }
    if batch == 0 {
        return Err(Error::InvalidArgument("batch must be >= 1".into()));
    }
    let d = x.len();
    let mut point = vec![0.0; d];
    let mut z = vec![0.0; d];
    let mut g = vec![0.0; d];
    let mut draws = vec![0.0; n * d];
    for row in draws.chunks_exact_mut(d) {
        for _ in 0..batch {
            draw(pot, x, mu, estimator, rng, &mut point, &mut z, &mut g);
            for (r, gi) in row.iter_mut().zip(&g) {
                *r += gi;
            }
        }
        if batch > 1 {
            row.iter_mut().for_each(|r| *r /= batch as f64);
        }
    }
    // Deviations are taken from the first draw so a degenerate estimator
    // gives exactly zero.
    let first = draws[..d].to_vec();
    let mut shift = vec![0.0; d];
    for row in draws.chunks_exact(d) {
        for ((m, r), f) in shift.iter_mut().zip(row).zip(&first) {
            *m += r - f;
        }
    }
    shift.iter_mut().for_each(|m| *m /= n as f64);
    let q: Vec<f64> = draws
        .chunks_exact(d)
        .map(|row| {
            let s: f64 = row.iter().zip(&first).zip(&shift).map(|((r, f), m)| (r - f - m) * (r - f - m)).sum();
            s / d as f64
        })
        .collect();
    let qbar = q.iter().sum::<f64>() / n as f64;
    let qvar = q.iter().map(|v| (v - qbar) * (v - qbar)).sum::<f64>() / (n - 1) as f64;
    let scale = n as f64 / (n - 1) as f64;
    Ok(VarianceEstimate { sigma2: qbar * scale, stderr: scale * (qvar / n as f64).sqrt() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{AbsSum, CompositePotential, Regularizer, Zero};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn gaussian(d: usize) -> CompositePotential {
        CompositePotential::new(Arc::new(Zero::new(d).unwrap()), Regularizer::quadratic(1.0, vec![0.0; d]).unwrap()).unwrap()
    }

    fn abs_plus_half_square() -> CompositePotential {
        CompositePotential::new(Arc::new(AbsSum::new(1, 1.0).unwrap()), Regularizer::quadratic(1.0, vec![0.0]).unwrap())
            .unwrap()
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn zero_radius_returns_plain_subgradient() {
        let p = abs_plus_half_square();
        let s = stochastic_grad(&p, &[2.0], 0.0, &mut rng(1)).unwrap();
        assert_eq!(s.grad, vec![3.0]);
        assert_eq!(s.z.len(), 1);
        let s = shifted_stochastic_grad(&p, &[2.0], 0.0, 0.1, &mut rng(1)).unwrap();
        assert_eq!(s.grad, vec![3.0]);
    }

    #[test]
    fn draw_is_recomputable_from_z() {
        let p = abs_plus_half_square();
        let s = stochastic_grad(&p, &[0.3], 0.7, &mut rng(2)).unwrap();
        assert_eq!(s.grad, p.subgrad(&[0.3 + 0.7 * s.z[0]]).unwrap());
        let t = shifted_stochastic_grad(&p, &[0.3], 0.7, 0.05, &mut rng(2)).unwrap();
        assert_eq!(t.z, s.z);
        assert_eq!(t.grad[0], s.grad[0] - (0.7 / 0.05) * s.z[0]);
    }

    #[test]
    fn rejects_bad_arguments() {
        let p = gaussian(2);
        assert!(stochastic_grad(&p, &[0.0], 0.1, &mut rng(0)).is_err());
        assert!(stochastic_grad(&p, &[0.0, 0.0], -0.1, &mut rng(0)).is_err());
        assert!(shifted_stochastic_grad(&p, &[0.0, 0.0], 0.1, 0.0, &mut rng(0)).is_err());
        assert!(smoothed_value_mc(&p, &[0.0, 0.0], 0.1, 1, &mut rng(0)).is_err());
        assert!(smoothed_value_closed(&ClosedForm::Abs1d, &[0.0, 1.0], 0.1).is_err());
    }

    #[test]
    fn quadratic_gradient_is_unbiased() {
        let p = gaussian(3);
        let x = [0.5, -1.0, 2.0];
        let mut r = rng(3);
        let n = 100_000;
        let mut sum = [0.0; 3];
        let mut sq = [0.0; 3];
        for _ in 0..n {
            let s = stochastic_grad(&p, &x, 0.8, &mut r).unwrap();
            for j in 0..3 {
                sum[j] += s.grad[j];
                sq[j] += s.grad[j] * s.grad[j];
            }
        }
        for j in 0..3 {
            let mean = sum[j] / n as f64;
            let var = sq[j] / n as f64 - mean * mean;
            assert!((mean - x[j]).abs() <= 4.0 * (var / n as f64).sqrt());
        }
    }

    #[test]
    fn abs_gradient_at_kink_averages_to_zero() {
        let p = AbsSum::new(1, 1.0).unwrap();
        let mut r = rng(4);
        let n = 100_000;
        let mean: f64 = (0..n).map(|_| stochastic_grad(&p, &[0.0], 1.0, &mut r).unwrap().grad[0]).sum::<f64>() / n as f64;
        assert!(mean.abs() <= 4.0 / (n as f64).sqrt());
    }

    #[test]
    fn mc_value_examples() {
        let p = gaussian(2);
        let e = smoothed_value_mc(&p, &[0.0, 0.0], 0.0, 10, &mut rng(5)).unwrap();
        assert_eq!((e.estimate, e.stderr), (0.0, 0.0));
        let e = smoothed_value_mc(&p, &[0.0, 0.0], 0.5, 100_000, &mut rng(5)).unwrap();
        assert!((e.estimate - 0.25).abs() <= 4.0 * e.stderr);
        let a = AbsSum::new(1, 1.0).unwrap();
        let e = smoothed_value_mc(&a, &[0.0], 1.0, 100_000, &mut rng(6)).unwrap();
        assert!((e.estimate - (2.0 / std::f64::consts::PI).sqrt()).abs() <= 4.0 * e.stderr);
    }

    #[test]
    fn closed_form_examples() {
        let q = ClosedForm::Quadratic { a: 1.0, center: vec![0.0] };
        assert!((smoothed_value_closed(&q, &[0.0], 0.5).unwrap() - 0.125).abs() < 1e-15);
        let v = smoothed_value_closed(&ClosedForm::Abs1d, &[0.0], 1.0).unwrap();
        assert!((v - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-15);
        for x in [-3.0, -0.5, 0.0, 0.1, 2.0] {
            for mu in [0.0, 0.1, 1.0, 10.0, 1e3] {
                assert!(smoothed_value_closed(&ClosedForm::Abs1d, &[x], mu).unwrap() >= x.abs());
            }
        }
    }

    #[test]
    fn closed_form_gradient_matches_mc_gradient() {
        // d/dx of the abs1d closed form is erf(x/(√2μ)); compare against the
        // stochastic-gradient mean via a central difference of the closed form.
        let a = AbsSum::new(1, 1.0).unwrap();
        let mu = 0.4;
        for (i, x) in [-0.5, 0.0, 0.2, 1.0].into_iter().enumerate() {
            let h = 1e-5;
            let fd = (smoothed_value_closed(&ClosedForm::Abs1d, &[x + h], mu).unwrap()
                - smoothed_value_closed(&ClosedForm::Abs1d, &[x - h], mu).unwrap())
                / (2.0 * h);
            let mut r = rng(10 + i as u64);
            let n = 100_000;
            let g: Vec<f64> = (0..n).map(|_| stochastic_grad(&a, &[x], mu, &mut r).unwrap().grad[0]).collect();
            let mean = g.iter().sum::<f64>() / n as f64;
            let var = g.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
            assert!((mean - fd).abs() <= 4.0 * (var / n as f64).sqrt(), "x={x}: {mean} vs {fd}");
        }
    }

    #[test]
    fn variance_examples() {
        let p = gaussian(5);
        let x = [0.1, 0.2, -0.3, 1.0, 0.0];
        let v = variance_estimate(&p, &x, 0.0, 100, &mut rng(7)).unwrap();
        assert_eq!(v.sigma2, 0.0);
        let v = variance_estimate(&p, &x, 0.3, 10_000, &mut rng(7)).unwrap();
        assert!((v.sigma2 - 0.09).abs() <= 4.0 * v.stderr, "{v:?}");

        let q = abs_plus_half_square();
        let v = variance_estimate(&q, &[0.0], 0.1, 10_000, &mut rng(8)).unwrap();
        assert!(v.sigma2 <= 16.04);
    }

    #[test]
    fn shifted_variance_dominates_plain() {
        let p = gaussian(5);
        let x = [0.0; 5];
        let plain = variance_estimate(&p, &x, 0.3, 10_000, &mut rng(9)).unwrap();
        let shifted =
            estimator_variance(&p, &x, 0.3, GradientEstimator::Shifted { eta: 0.01 }, 10_000, 1, &mut rng(9)).unwrap();
        assert!(shifted.sigma2 >= plain.sigma2);
        // (1 − 1/η)²μ² per coordinate.
        let hand = 0.09 * 99.0f64.powi(2);
        assert!((shifted.sigma2 - hand).abs() <= 0.2 * hand);
    }

    #[test]
    fn batching_divides_variance() {
        let p = gaussian(2);
        let v1 = variance_estimate(&p, &[0.0, 0.0], 1.0, 20_000, &mut rng(11)).unwrap();
        let v4 = estimator_variance(&p, &[0.0, 0.0], 1.0, GradientEstimator::Perturbed, 20_000, 4, &mut rng(12)).unwrap();
        assert!((v1.sigma2 - 1.0).abs() <= 4.0 * v1.stderr);
        assert!((v4.sigma2 - 0.25).abs() <= 4.0 * v4.stderr);
    }
}
