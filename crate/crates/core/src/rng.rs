//! Counter-based random streams.
//!
//! Every draw is a pure function of `(key, counter)`, where the key is derived
//! from a root seed and a stream index (the chain step, an epoch number, a
//! Monte-Carlo replicate...). Streams never share state, so the draws of a
//! chain do not depend on how many chains run in parallel or on which
//! quantities are recorded.

use rand::RngCore;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream domains. Keeping them apart means e.g. epoch permutations never
/// reuse the bits that feed per-step Gaussian draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Step = 1,
    Epoch = 2,
    MonteCarlo = 3,
    Bootstrap = 4,
    Init = 5,
    Data = 6,
}

/// Derive the key of stream `index` in `domain` under `seed`.
#[inline]
pub fn derive_key(seed: u64, domain: Domain, index: u64) -> u64 {
    let d = mix64(seed ^ mix64((domain as u64).wrapping_mul(GOLDEN)));
    mix64(d ^ mix64(index.wrapping_add(1).wrapping_mul(GOLDEN)))
}

/// A keyed counter generator (SplitMix64 over a counter).
#[derive(Debug, Clone)]
pub struct StreamRng {
    key: u64,
    counter: u64,
}

impl StreamRng {
    pub fn from_key(key: u64) -> Self {
        Self { key, counter: 0 }
    }

    pub fn new(seed: u64, domain: Domain, index: u64) -> Self {
        Self::from_key(derive_key(seed, domain, index))
    }

    /// Randomness for step `step` of the chain rooted at `seed`.
    pub fn for_step(seed: u64, step: u64) -> Self {
        Self::new(seed, Domain::Step, step)
    }

    /// Number of 64-bit words consumed so far.
    pub fn position(&self) -> u64 {
        self.counter
    }
}

impl RngCore for StreamRng {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}

/// Keyed pseudo-random permutation of `0..n` (Feistel network with cycle
/// walking). Evaluating one position is O(1) amortised and needs no table,
/// which lets without-replacement minibatching stay a pure function of the
/// step index.
#[derive(Debug, Clone)]
pub struct KeyedPermutation {
    n: u64,
    half_bits: u32,
    keys: [u64; 4],
}

impl KeyedPermutation {
    pub fn new(n: u64, key: u64) -> Self {
        assert!(n > 0, "permutation of an empty range");
        let bits = 64 - (n.max(2) - 1).leading_zeros();
        let half_bits = bits.div_ceil(2).max(1);
        let mut keys = [0u64; 4];
        for (i, k) in keys.iter_mut().enumerate() {
            *k = mix64(key ^ (i as u64 + 1).wrapping_mul(GOLDEN));
        }
        Self { n, half_bits, keys }
    }

    #[inline]
    fn round(&self, x: u64) -> u64 {
        let mask = (1u64 << self.half_bits) - 1;
        let mut left = x >> self.half_bits;
        let mut right = x & mask;
        for k in &self.keys {
            let f = mix64(right ^ k) & mask;
            let next = left ^ f;
            left = right;
            right = next;
        }
        (left << self.half_bits) | right
    }

    /// Image of `i` (must be `< n`).
    pub fn apply(&self, i: u64) -> u64 {
        debug_assert!(i < self.n);
        let mut x = self.round(i);
        while x >= self.n {
            x = self.round(x);
        }
        x
    }

    pub fn len(&self) -> u64 {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}
