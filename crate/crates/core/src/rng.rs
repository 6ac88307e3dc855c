//! Seed derivation and per-chain normal streams.
//!
//! Every stream is a ChaCha8 generator keyed by a hash of
//! `(seed, purpose tag, index)`, so chain `i` sees the same numbers no matter
//! which worker runs it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type StreamRng = ChaCha8Rng;

/// Purpose tags keep the init, dynamics and metric streams disjoint.
pub mod tag {
    pub const NOISE: u64 = 0x6e6f_6973;
    pub const INIT: u64 = 0x696e_6974;
    pub const SLICE: u64 = 0x736c_6963;
    pub const REFERENCE: u64 = 0x7265_6673;
    pub const BASELINE: u64 = 0x6261_7365;
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `hash(seed, tag, index)`.
pub fn derive_seed(seed: u64, tag: u64, index: u64) -> u64 {
    mix64(mix64(mix64(seed) ^ tag) ^ index)
}

pub fn stream(seed: u64, tag: u64, index: u64) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(seed, tag, index))
}

/// Source of standard-normal vectors.
pub trait GaussianSource {
    fn fill_normal(&mut self, out: &mut [f64]);
}

/// Normal vectors drawn from a generator, counting how many vectors were taken.
#[derive(Clone, Debug)]
pub struct NormalStream<R = StreamRng> {
    rng: R,
    vectors: u64,
}

impl<R: Rng> NormalStream<R> {
    pub fn new(rng: R) -> Self {
        Self { rng, vectors: 0 }
    }

    /// Number of vectors drawn so far.
    pub fn vectors_drawn(&self) -> u64 {
        self.vectors
    }
}

impl NormalStream<StreamRng> {
    pub fn from_seed(seed: u64) -> Self {
        Self::new(StreamRng::seed_from_u64(seed))
    }
}

impl<R: Rng> GaussianSource for NormalStream<R> {
    fn fill_normal(&mut self, out: &mut [f64]) {
        fill_normal(&mut self.rng, out);
        self.vectors += 1;
    }
}

/// Reads a two-draws-per-step stream (ω, ξ, ω, ξ, ...) as if only the ξ
/// draws existed: every request first discards one vector.
///
/// Plain LMC run through this adapter sees exactly the ξ sequence that the
/// perturbed chains consume from the same stream.
pub struct SkipAlternate<'a, S: GaussianSource> {
    inner: &'a mut S,
    scratch: Vec<f64>,
}

impl<'a, S: GaussianSource> SkipAlternate<'a, S> {
    pub fn new(inner: &'a mut S) -> Self {
        Self { inner, scratch: Vec::new() }
    }
}

impl<S: GaussianSource> GaussianSource for SkipAlternate<'_, S> {
    fn fill_normal(&mut self, out: &mut [f64]) {
        self.scratch.resize(out.len(), 0.0);
        self.inner.fill_normal(&mut self.scratch);
        self.inner.fill_normal(out);
    }
}

/// Fills `out` with i.i.d. standard normals.
pub fn fill_normal<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
}

pub fn normal_vec<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<f64> {
    let mut v = vec![0.0; d];
    fill_normal(rng, &mut v);
    v
}
