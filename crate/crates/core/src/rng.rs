//! Deterministic random number generation.
//!
//! One fixed generator (xoshiro256**, seeded through splitmix64) drives every
//! random decision in the crate. A single run seed from the configuration is
//! split into independent streams, one per purpose, so that e.g. enabling
//! dropout does not perturb the parameter-initialization draws:
//!
//! - [`stream::INIT`]: parameter initialization
//! - [`stream::DROPOUT`]: dropout masks
//! - [`stream::SHUFFLE`]: epoch shuffling and batching
//! - [`stream::SPLIT`]: train/dev splitting
//! - [`stream::PROBE`]: finite-difference probe selection
//!
//! Identical seeds give bitwise-identical draw sequences on every platform.

use alloc::vec::Vec;

/// Stream tags for [`RngState::fork`].
pub mod stream {
    pub const INIT: u64 = 1;
    pub const DROPOUT: u64 = 2;
    pub const SHUFFLE: u64 = 3;
    pub const SPLIT: u64 = 4;
    pub const PROBE: u64 = 5;
}

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN_GAMMA);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic generator state (xoshiro256**).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngState {
    seed: u64,
    s: [u64; 4],
}

impl RngState {
    /// Creates a generator from a 64-bit seed. The internal 256-bit state is
    /// expanded from the seed with splitmix64, the standard seeding procedure
    /// for the xoshiro family.
    pub fn new(seed: u64) -> Self {
        let mut sm = seed;
        let s = [
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
        ];
        RngState { seed, s }
    }

    /// The seed this generator was created from.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Derives an independent substream. Forking is a pure function of
    /// (seed, tag), not of the generator position, so streams can be created
    /// in any order. Chain forks for nested derivation, e.g.
    /// `rng.fork(stream::SHUFFLE).fork(epoch as u64)`.
    pub fn fork(&self, tag: u64) -> RngState {
        let mut sm = self.seed ^ tag.wrapping_mul(GOLDEN_GAMMA);
        let derived = splitmix64(&mut sm) ^ splitmix64(&mut sm).rotate_left(17);
        RngState::new(derived)
    }

    /// Next raw 64-bit output.
    pub fn next_u64(&mut self) -> u64 {
        let result = self.s[1].wrapping_mul(5).rotate_left(7).wrapping_mul(9);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = self.s[3].rotate_left(45);
        result
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in `[-half_range, half_range)`.
    pub fn uniform_symmetric(&mut self, half_range: f64) -> f64 {
        (self.uniform() * 2.0 - 1.0) * half_range
    }

    /// Bernoulli draw: true with probability `p`.
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Uniform index in `[0, n)`. `n` must be nonzero.
    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        // Modulo bias is below 2^-40 for any n that fits in memory here.
        (self.next_u64() % n as u64) as usize
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }

    /// A shuffled copy of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        self.shuffle(&mut p);
        p
    }
}
