//! Seeded random source used by every generator in the crate.
//!
//! The generator is ChaCha20 (RFC 8439 block function, `rand_chacha`
//! word order). The 32-byte key is the little-endian seed followed by 24 zero
//! bytes; the 64-bit ChaCha stream id selects an independent substream, so
//! channel `i` of a synthetic tensor always uses stream `i` regardless of
//! how many channels precede it. Gaussian draws use `rand_distr`'s ziggurat
//! sampler and Student-t draws its `StudentT` (normal over scaled chi).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};

pub struct SeededRng {
    inner: ChaCha20Rng,
}

impl SeededRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        let mut inner = ChaCha20Rng::from_seed(key);
        inner.set_stream(stream);
        Self { inner }
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// Student-t draw with `dof` degrees of freedom; `dof` must be positive.
    pub fn student_t(&mut self, dof: f64) -> f64 {
        StudentT::new(dof)
            .expect("dof validated by caller")
            .sample(&mut self.inner)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn sign(&mut self) -> f64 {
        if self.inner.gen::<bool>() {
            1.0
        } else {
            -1.0
        }
    }

    pub fn index(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }
}
