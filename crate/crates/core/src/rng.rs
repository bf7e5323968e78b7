//! Named random streams.
//!
//! Every consumer of randomness (a worker's mini-batch sampler, a worker's
//! compressor, the server's Bernoulli coin, the bucketing shuffle) owns a
//! separate ChaCha8 stream. All streams share the master seed as key and are
//! told apart by ChaCha's 64-bit stream selector, laid out as
//! `role << 32 | index`. Draw order inside one stream never depends on what
//! other streams do, so results are independent of execution order.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Consumer role of a stream. The discriminant is the high word of the
/// ChaCha stream selector and must never be reordered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u32)]
pub enum StreamRole {
    /// Server coin `c_k`.
    ServerCoin = 1,
    /// Server bucketing permutations.
    ServerBucketing = 2,
    /// Worker mini-batch index draws.
    Sampling = 3,
    /// Worker compression draws.
    Compression = 4,
    /// Monte-Carlo replays used by diagnostics; index is the replay slot.
    Replay = 5,
    /// Synthetic data generation.
    Data = 6,
    /// Dataset shuffling for sharding.
    Sharding = 7,
    /// Free-form test and audit randomness.
    Audit = 8,
}

/// A deterministic random stream derived from `(master_seed, role, index)`.
#[derive(Debug, Clone)]
pub struct RngStream {
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, role: StreamRole, index: u32) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(master_seed);
        inner.set_stream(((role as u64) << 32) | index as u64);
        Self { inner }
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform integer in `[lo, hi)`.
    pub fn below(&mut self, lo: usize, hi: usize) -> usize {
        self.inner.random_range(lo..hi)
    }

    /// Bernoulli draw with success probability `p`; `p >= 1` is always true.
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// In-place Fisher-Yates shuffle (n - 1 draws).
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(0, i + 1);
            items.swap(i, j);
        }
    }

    /// Random permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        self.shuffle(&mut p);
        p
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
