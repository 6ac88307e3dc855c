//! Sample sets and empirical distances: 1-D and exact W₂, sliced W₂,
//! histogram TV, fourth moments, and the 1-D quadrature truth.

mod assignment;
mod density;

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use assignment::solve as solve_assignment;
pub use density::{quadrature_density_1d, DensityGrid, MAX_TAIL_MASS};

use crate::error::{check_dim, Error, Result};
use crate::rng::{stream, tag, GaussianSource, NormalStream};

/// Largest `n` accepted by [`w2_exact`].
pub const W2_EXACT_MAX_N: usize = 4096;

/// Provenance carried by every sample set.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub config_hash: u64,
    pub seed: u64,
    pub variant: String,
}

/// `n × d` matrix of finite points, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    n: usize,
    d: usize,
    data: Vec<f64>,
    pub meta: SampleMeta,
}

impl SampleSet {
    pub fn new(d: usize, data: Vec<f64>, meta: SampleMeta) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidArgument("sample dimension must be >= 1".into()));
        }
        if data.is_empty() || !data.len().is_multiple_of(d) {
            return Err(Error::InvalidArgument(format!("{} values do not form a nonempty n x {d} matrix", data.len())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("sample entries must be finite".into()));
        }
        Ok(Self { n: data.len() / d, d, data, meta })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * d);
        for r in rows {
            check_dim(d, r.len())?;
            data.extend_from_slice(r);
        }
        Self::new(d, data, SampleMeta::default())
    }

    /// One-dimensional set from scalars.
    pub fn from_scalars(xs: &[f64]) -> Result<Self> {
        Self::new(1, xs.to_vec(), SampleMeta::default())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.d)
    }

    /// Projections `⟨xᵢ, u⟩`.
    pub fn project(&self, u: &[f64]) -> Vec<f64> {
        self.rows().map(|r| r.iter().zip(u).map(|(a, b)| a * b).sum()).collect()
    }

    /// CSV: a `# config_hash=…,seed=…,variant=…` line, a header `x0,…`, then
    /// one row per point in shortest round-trip decimal.
    pub fn to_csv(&self) -> String {
        let mut s = format!(
            "# config_hash={},seed={},variant={}\n",
            crate::hash::hex(self.meta.config_hash),
            self.meta.seed,
            self.meta.variant
        );
        let header: Vec<String> = (0..self.d).map(|j| format!("x{j}")).collect();
        s.push_str(&header.join(","));
        s.push('\n');
        for r in self.rows() {
            for (j, v) in r.iter().enumerate() {
                if j > 0 {
                    s.push(',');
                }
                let _ = write!(s, "{v:?}");
            }
            s.push('\n');
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// Parses the format written by [`SampleSet::to_csv`]; comment lines other
    /// than the provenance line are ignored.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut meta = SampleMeta::default();
        let mut d = None;
        let mut data = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                for kv in rest.trim().split(',') {
                    match kv.split_once('=') {
                        Some(("config_hash", v)) => {
                            meta.config_hash = u64::from_str_radix(v, 16)
                                .map_err(|e| Error::InvalidArgument(format!("bad config_hash {v:?}: {e}")))?
                        }
                        Some(("seed", v)) => {
                            meta.seed = v.parse().map_err(|e| Error::InvalidArgument(format!("bad seed {v:?}: {e}")))?
                        }
                        Some(("variant", v)) => meta.variant = v.to_string(),
                        _ => {}
                    }
                }
                continue;
            }
            if d.is_none() {
                d = Some(line.split(',').count());
                continue;
            }
            let before = data.len();
            for tok in line.split(',') {
                let v: f64 = tok
                    .trim()
                    .parse()
                    .map_err(|e| Error::InvalidArgument(format!("bad sample value {tok:?}: {e}")))?;
                data.push(v);
            }
            check_dim(d.unwrap_or(0), data.len() - before)?;
        }
        Self::new(d.unwrap_or(0), data, meta)
    }
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

/// Mean of squared differences of two sorted vectors after matching the
/// larger one down to the smaller size by quantiles.
fn w2_sq_sorted(a: &[f64], b: &[f64]) -> f64 {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let (n, big) = (small.len(), large.len());
    let mut acc = 0.0;
    for (i, s) in small.iter().enumerate() {
        let j = if n == big { i } else { (((i as f64 + 0.5) * big as f64 / n as f64).floor() as usize).min(big - 1) };
        let diff = s - large[j];
        acc += diff * diff;
    }
    acc / n as f64
}

fn w2_1d_values(a: Vec<f64>, b: Vec<f64>) -> f64 {
    w2_sq_sorted(&sorted(a), &sorted(b)).sqrt()
}

fn require_1d(s: &SampleSet) -> Result<()> {
    if s.d() == 1 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("one-dimensional metric needs d = 1, got d = {}", s.d())))
    }
}

/// Sorted-coupling W₂ in one dimension. With unequal sizes the larger set is
/// quantile-matched down, which makes this an estimator rather than the exact
/// distance.
pub fn w2_1d(a: &SampleSet, b: &SampleSet) -> Result<f64> {
    require_1d(a)?;
    require_1d(b)?;
    Ok(w2_1d_values(a.data().to_vec(), b.data().to_vec()))
}

/// Exact empirical W₂ via optimal assignment on squared distances.
pub fn w2_exact(a: &SampleSet, b: &SampleSet) -> Result<f64> {
    check_dim(a.d(), b.d())?;
    check_dim(a.n(), b.n())?;
    let n = a.n();
    if n > W2_EXACT_MAX_N {
        return Err(Error::InvalidArgument(format!("w2_exact caps n at {W2_EXACT_MAX_N}, got {n}")));
    }
    let mut cost = vec![0.0; n * n];
    cost.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let ai = a.row(i);
        for (j, c) in row.iter_mut().enumerate() {
            *c = ai.iter().zip(b.row(j)).map(|(x, y)| (x - y) * (x - y)).sum();
        }
    });
    let (_, total) = solve_assignment(&cost, n);
    Ok((total.max(0.0) / n as f64).sqrt())
}

/// Pairwise (cascade) summation; fixed tree shape makes the result
/// independent of how the inputs were produced.
fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

/// Unit directions for slicing, drawn as normalized Gaussians from the
/// dedicated `SLICE` stream of `seed`.
pub fn slice_directions(d: usize, n_proj: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut s = NormalStream::new(stream(seed, tag::SLICE, 0));
    (0..n_proj)
        .map(|_| loop {
            let mut u = vec![0.0; d];
            s.fill_normal(&mut u);
            let nrm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
            if nrm > 0.0 {
                u.iter_mut().for_each(|v| *v /= nrm);
                break u;
            }
        })
        .collect()
}

/// `√(mean over directions u of W₂²(a·u, b·u))`.
pub fn w2_sliced(a: &SampleSet, b: &SampleSet, n_proj: usize, seed: u64) -> Result<f64> {
    check_dim(a.d(), b.d())?;
    if n_proj == 0 {
        return Err(Error::InvalidArgument("n_proj must be >= 1".into()));
    }
    let dirs = slice_directions(a.d(), n_proj, seed);
    let per: Vec<f64> = dirs
        .par_iter()
        .map(|u| w2_sq_sorted(&sorted(a.project(u)), &sorted(b.project(u))))
        .collect();
    Ok((pairwise_sum(&per) / n_proj as f64).sqrt())
}

/// Reference for [`tv_histogram`].
#[derive(Clone, Copy, Debug)]
pub enum TvReference<'a> {
    Density(&'a DensityGrid),
    Samples(&'a SampleSet),
}

/// Binned TV estimate `½Σ|p̂_a(bin) − p_ref(bin)|` on `n_bins` equal bins
/// spanning the reference (the grid span, or the range of the reference
/// samples), plus one bin collecting everything outside.
pub fn tv_histogram(a: &SampleSet, reference: TvReference<'_>, n_bins: usize) -> Result<f64> {
    require_1d(a)?;
    if n_bins < 2 {
        return Err(Error::InvalidArgument(format!("n_bins must be >= 2, got {n_bins}")));
    }
    let (lo, hi) = match reference {
        TvReference::Density(g) => (g.lo(), g.hi()),
        TvReference::Samples(b) => {
            require_1d(b)?;
            let lo = b.data().iter().copied().fold(f64::INFINITY, f64::min);
            let hi = b.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if lo == hi {
                (lo - 0.5, hi + 0.5)
            } else {
                (lo, hi)
            }
        }
    };
    let width = (hi - lo) / n_bins as f64;
    let bin_of = |x: f64| -> usize {
        if x < lo || x > hi {
            n_bins
        } else {
            (((x - lo) / width) as usize).min(n_bins - 1)
        }
    };
    let histogram = |s: &SampleSet| -> Vec<f64> {
        let mut h = vec![0.0; n_bins + 1];
        for &x in s.data() {
            h[bin_of(x)] += 1.0;
        }
        let n = s.n() as f64;
        h.iter_mut().for_each(|c| *c /= n);
        h
    };
    let p = histogram(a);
    let q = match reference {
        TvReference::Samples(b) => histogram(b),
        TvReference::Density(g) => {
            let mut q: Vec<f64> = (0..n_bins)
                .map(|k| {
                    let l = lo + k as f64 * width;
                    let r = if k + 1 == n_bins { hi } else { l + width };
                    g.mass_between(l, r)
                })
                .collect();
            q.push(0.0);
            q
        }
    };
    let tv = 0.5 * p.iter().zip(&q).map(|(x, y)| (x - y).abs()).sum::<f64>();
    Ok(tv.clamp(0.0, 1.0))
}

/// `(1/n)Σ‖xᵢ − center‖⁴`.
pub fn moment4(a: &SampleSet, center: &[f64]) -> Result<f64> {
    check_dim(a.d(), center.len())?;
    if a.n() < 2 {
        return Err(Error::InvalidArgument("moment4 needs at least two samples".into()));
    }
    let s: f64 = a
        .rows()
        .map(|r| {
            let sq: f64 = r.iter().zip(center).map(|(x, c)| (x - c) * (x - c)).sum();
            sq * sq
        })
        .sum();
    Ok(s / a.n() as f64)
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};

    use super::*;
    use crate::rng::{normal_vec, StreamRng};

    fn s1(xs: &[f64]) -> SampleSet {
        SampleSet::from_scalars(xs).unwrap()
    }

    #[test]
    fn w2_1d_examples() {
        assert_eq!(w2_1d(&s1(&[1.0, 5.0, 2.0]), &s1(&[1.0, 5.0, 2.0])).unwrap(), 0.0);
        assert_eq!(w2_1d(&s1(&[0.0]), &s1(&[3.0])).unwrap(), 3.0);
        assert_eq!(w2_1d(&s1(&[0.0, 2.0]), &s1(&[3.0, 1.0])).unwrap(), 1.0);
        let two_d = SampleSet::from_rows(&[vec![0.0, 1.0]]).unwrap();
        assert!(w2_1d(&two_d, &two_d).is_err());
    }

    #[test]
    fn w2_1d_unequal_sizes_quantile_matches() {
        let a = s1(&[0.0, 1.0]);
        let b = s1(&[0.0, 0.0, 1.0, 1.0]);
        assert_eq!(w2_1d(&a, &b).unwrap(), 0.0);
        assert_eq!(w2_1d(&b, &a).unwrap(), 0.0);
    }

    #[test]
    fn w2_exact_hand_instance() {
        let a = SampleSet::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let b = SampleSet::from_rows(&[vec![1.0, 1.0], vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        assert!((w2_exact(&a, &b).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(w2_exact(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn w2_exact_matches_sorting_in_1d() {
        let mut rng = StreamRng::seed_from_u64(5);
        for _ in 0..20 {
            let n = rng.random_range(1..=64);
            let a = s1(&normal_vec(&mut rng, n));
            let b = s1(&normal_vec(&mut rng, n));
            assert!((w2_exact(&a, &b).unwrap() - w2_1d(&a, &b).unwrap()).abs() <= 1e-10);
        }
    }

    #[test]
    fn sliced_examples() {
        let mut rng = StreamRng::seed_from_u64(1);
        let a = SampleSet::new(3, normal_vec(&mut rng, 300), SampleMeta::default()).unwrap();
        assert_eq!(w2_sliced(&a, &a, 16, 1).unwrap(), 0.0);
        let x = s1(&normal_vec(&mut rng, 50));
        let y = s1(&normal_vec(&mut rng, 50));
        let direct = w2_1d(&x, &y).unwrap();
        assert!((w2_sliced(&x, &y, 7, 3).unwrap() - direct).abs() <= 1e-12);
        assert_eq!(w2_sliced(&a, &a, 16, 1).unwrap(), w2_sliced(&a, &a, 16, 1).unwrap());
        assert!(w2_sliced(&a, &a, 0, 1).is_err());
    }

    #[test]
    fn sliced_matches_brute_force_projection_average() {
        let mut rng = StreamRng::seed_from_u64(2);
        let n = 400;
        let a = SampleSet::new(2, normal_vec(&mut rng, 2 * n), SampleMeta::default()).unwrap();
        let mut shifted = normal_vec(&mut rng, 2 * n);
        for p in shifted.chunks_exact_mut(2) {
            p[0] += 1.0;
            p[1] -= 0.5;
        }
        let b = SampleSet::new(2, shifted, SampleMeta::default()).unwrap();
        let dirs = slice_directions(2, 32, 9);
        let mut acc = 0.0;
        for u in &dirs {
            let w = w2_1d(&s1(&a.project(u)), &s1(&b.project(u))).unwrap();
            acc += w * w;
        }
        let brute = (acc / 32.0).sqrt();
        assert!((w2_sliced(&a, &b, 32, 9).unwrap() - brute).abs() <= 1e-12);
    }

    #[test]
    fn tv_examples() {
        let a = s1(&[0.1, 0.2, 0.3, 0.9]);
        assert_eq!(tv_histogram(&a, TvReference::Samples(&a), 10).unwrap(), 0.0);
        let far = s1(&[10.0, 11.0]);
        assert_eq!(tv_histogram(&far, TvReference::Samples(&a), 10).unwrap(), 1.0);
        assert_eq!(tv_histogram(&a, TvReference::Samples(&far), 10).unwrap(), 1.0);
        assert!(tv_histogram(&a, TvReference::Samples(&a), 1).is_err());
    }

    #[test]
    fn moment4_examples() {
        assert_eq!(moment4(&s1(&[2.0, 2.0, 2.0]), &[2.0]).unwrap(), 0.0);
        assert_eq!(moment4(&s1(&[-1.0, 1.0]), &[0.0]).unwrap(), 1.0);
        assert!(moment4(&s1(&[1.0]), &[0.0]).is_err());
        let mut rng = StreamRng::seed_from_u64(4);
        let g = s1(&normal_vec(&mut rng, 100_000));
        assert!((moment4(&g, &[0.0]).unwrap() - 3.0).abs() < 0.15);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let mut rng = StreamRng::seed_from_u64(8);
        let meta = SampleMeta { config_hash: 0xdead_beef_0123_4567, seed: 99, variant: "PLMC".into() };
        let s = SampleSet::new(3, normal_vec(&mut rng, 30), meta).unwrap();
        let text = s.to_csv();
        assert!(text.starts_with("# config_hash=deadbeef01234567,seed=99,variant=PLMC\nx0,x1,x2\n"));
        assert_eq!(SampleSet::from_csv_str(&text).unwrap(), s);
    }

    #[test]
    fn sample_set_validation() {
        assert!(SampleSet::new(2, vec![1.0, 2.0, 3.0], SampleMeta::default()).is_err());
        assert!(SampleSet::new(1, vec![f64::NAN], SampleMeta::default()).is_err());
        assert!(SampleSet::new(1, vec![], SampleMeta::default()).is_err());
    }
}
