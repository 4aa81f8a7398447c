use rand::seq::SliceRandom;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::numerics::Matrix;

/// Seeded, stream-addressable generator. Identical `(seed, stream)` and call
/// sequence reproduce identical draws.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { seed, stream, inner }
    }

    /// A fresh generator on another stream of the same seed.
    pub fn fork(&self, stream: u64) -> Self {
        Self::new(self.seed, stream)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }

    /// `m` distinct indices from `0..n`, uniformly without replacement, sorted ascending.
    pub fn sample_indices(&mut self, n: usize, m: usize) -> Vec<usize> {
        let mut idx = rand::seq::index::sample(&mut self.inner, n, m).into_vec();
        idx.sort_unstable();
        idx
    }
}

const UNIFORM_FLOOR: f64 = 1e-12;

/// Standard Gumbel transform `-ln(-ln u)` with `u` clamped to `[1e-12, 1 - 1e-12]`.
#[inline]
pub fn gumbel_from_uniform(u: f64) -> f64 {
    let u = u.clamp(UNIFORM_FLOOR, 1.0 - UNIFORM_FLOOR);
    -(-u.ln()).ln()
}

/// I.i.d. standard Gumbel draws of the given shape.
pub fn sample_gumbel(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| gumbel_from_uniform(rng.uniform()))
}
