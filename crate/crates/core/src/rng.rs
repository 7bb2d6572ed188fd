//! Reproducible random streams.
//!
//! Every replica owns one [`RandomStream`]. The stream for replica `i` of a
//! run with master seed `s` is ChaCha8 keyed by `seed_from_u64(s)` with the
//! 64-bit stream id set to `i`. Streams for different indices never overlap,
//! so results do not depend on how replicas are scheduled over threads.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};

#[derive(Clone, Debug)]
pub struct RandomStream(ChaCha8Rng);

impl RandomStream {
    /// Stream 0 of `seed`.
    pub fn new(seed: u64) -> Self {
        Self::for_replica(seed, 0)
    }

    /// The stream owned by replica `replica_index` under `master_seed`.
    pub fn for_replica(master_seed: u64, replica_index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(replica_index);
        RandomStream(rng)
    }

    /// Draws a fresh master seed for a family of child streams.
    pub fn derive_seed(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform on [0, 1).
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.0.random::<f64>()
    }

    #[inline]
    pub fn standard_normal(&mut self) -> f64 {
        self.0.sample(StandardNormal)
    }

    /// Exponential with the given rate. Returns +inf for rate 0.
    #[inline]
    pub fn exponential(&mut self, rate: f64) -> f64 {
        let e: f64 = self.0.sample(Exp1);
        e / rate
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}
