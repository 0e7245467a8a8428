//! Deterministic, platform-independent random streams.
//!
//! Every stream is addressed by a `(root_seed, label)` pair. The label is
//! hashed with 64-bit FNV-1a, xored into the root seed, and the result seeds
//! a SplitMix64 generator whose first four outputs become the state of a
//! xoshiro256** generator. All draws are derived from that generator with
//! fixed algorithms, so any reimplementation following the same recipe sees
//! the same numbers.

use std::f64::consts::PI;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a hash of a byte string.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// SplitMix64, used only to expand a 64-bit seed into generator state.
#[derive(Clone, Debug)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(state: u64) -> Self {
        Self { state }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
}

/// A labelled xoshiro256** stream.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RngStream {
    state: [u64; 4],
    label: String,
}

impl RngStream {
    /// Derives the stream for `(root_seed, label)`.
    ///
    /// Panics if `label` is empty.
    pub fn derive(root_seed: u64, label: &str) -> Self {
        assert!(!label.is_empty(), "stream label must be nonempty");
        let mut sm = SplitMix64::new(root_seed ^ fnv1a64(label.as_bytes()));
        let state = [sm.next_u64(), sm.next_u64(), sm.next_u64(), sm.next_u64()];
        Self { state, label: label.to_owned() }
    }

    /// Builds a stream from raw generator state. Mostly useful for checking
    /// the generator against reference vectors.
    pub fn from_state(state: [u64; 4], label: &str) -> Self {
        Self { state, label: label.to_owned() }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn state(&self) -> [u64; 4] {
        self.state
    }

    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.state;
        let result = s[1].wrapping_mul(5).rotate_left(7).wrapping_mul(9);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        result
    }

    /// Uniform real in `[0, 1)` with 53 bits of resolution.
    pub fn next_uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, n)` by rejection sampling.
    ///
    /// Panics if `n == 0`.
    pub fn next_int(&mut self, n: u64) -> u64 {
        assert!(n >= 1, "next_int requires n >= 1");
        // Values below 2^64 mod n are rejected so the remaining range is a
        // whole multiple of n.
        let reject_below = n.wrapping_neg() % n;
        loop {
            let r = self.next_u64();
            if r >= reject_below {
                return r % n;
            }
        }
    }

    /// Convenience wrapper over [`next_int`](Self::next_int) for indices.
    pub fn next_index(&mut self, n: usize) -> usize {
        self.next_int(n as u64) as usize
    }

    /// Standard normal draw via the cosine branch of Box–Muller. Consumes
    /// exactly two uniforms; the sine branch is discarded.
    pub fn next_gauss(&mut self) -> f64 {
        let u1 = 1.0 - self.next_uniform();
        let u2 = self.next_uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
    }

    /// Fisher–Yates permutation of `0..k`.
    pub fn shuffle(&mut self, k: usize) -> Vec<usize> {
        let mut perm: Vec<usize> = (0..k).collect();
        self.shuffle_in_place(&mut perm);
        perm
    }

    pub fn shuffle_in_place<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_index(i + 1);
            items.swap(i, j);
        }
    }
}
