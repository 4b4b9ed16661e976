//! Seeded, splittable random streams.
//!
//! Every random draw in the lab goes through [`RngStream`], a ChaCha8
//! counter-based generator keyed by `(seed, stream)`. Identical keys give
//! identical sequences on every platform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        RngStream {
            seed,
            stream,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent child stream. Children of the same parent with the same
    /// `id` are identical; the parent's position is not consulted.
    pub fn split(&self, id: u64) -> RngStream {
        // splitmix-style mixing keeps nested splits from colliding
        let mut z = self
            .stream
            .wrapping_add(id.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
        Self::with_stream(self.seed, z)
    }

    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn gaussian(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    /// Uniform integer in `[lo, hi]`.
    pub fn int_inclusive(&mut self, lo: i64, hi: i64) -> i64 {
        self.inner.random_range(lo..=hi)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    pub fn gaussian_vec(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.gaussian()).collect()
    }

    pub fn gaussian_tensor(&mut self, shape: impl Into<Vec<usize>>) -> Tensor {
        let shape = shape.into();
        let n = shape.iter().product();
        Tensor::new(shape, self.gaussian_vec(n)).expect("valid shape")
    }
}

/// `count` filters of dimension `dim`, each with standard-normal entries
/// rescaled to unit ℓ² norm.
pub fn gaussian_unit_filters(rng: &mut RngStream, count: usize, dim: usize) -> Tensor {
    assert!(count >= 1 && dim >= 1, "filter bank needs count, dim >= 1");
    let mut data = Vec::with_capacity(count * dim);
    for _ in 0..count {
        let mut row = rng.gaussian_vec(dim);
        let mut n = crate::tensor::norm(&row);
        // all-zero draws have probability zero but would break normalization
        while n == 0.0 {
            row = rng.gaussian_vec(dim);
            n = crate::tensor::norm(&row);
        }
        data.extend(row.into_iter().map(|v| v / n));
    }
    Tensor::new([count, dim], data).expect("valid shape")
}
