//! Stateless counter-based random numbers.
//!
//! Every draw is a pure function of `(seed, stream, a, b)`, so results do not
//! depend on evaluation order or on how work is split across threads. The
//! mixing function is the SplitMix64 finalizer applied after each key word.

/// Independent draw families. Changing these values changes every dataset.
pub mod stream {
    pub const NOISE: u64 = 0x6e6f_6973_6500_0001;
    pub const RHO: u64 = 0x7268_6f00_0000_0002;
    pub const RUN_SEED: u64 = 0x7365_6564_0000_0003;
    pub const SPLIT: u64 = 0x7370_6c69_7400_0004;
    pub const BOOTSTRAP: u64 = 0x626f_6f74_0000_0005;
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// 64 random bits keyed by `(seed, stream, a, b)`.
#[inline]
pub fn keyed_u64(seed: u64, stream: u64, a: u64, b: u64) -> u64 {
    let mut h = mix64(seed.wrapping_add(GOLDEN));
    h = mix64(h ^ stream);
    h = mix64(h.wrapping_add(a.wrapping_mul(GOLDEN)));
    mix64(h ^ b.wrapping_mul(0xd1b5_4a32_d192_ed03))
}

/// Uniform in `[0, 1)` with 53 bits of resolution.
#[inline]
pub fn keyed_uniform(seed: u64, stream: u64, a: u64, b: u64) -> f64 {
    (keyed_u64(seed, stream, a, b) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform integer in `[0, n)`; `n` must be nonzero.
#[inline]
pub fn keyed_index(seed: u64, stream: u64, a: u64, b: u64, n: usize) -> usize {
    // Lemire's multiply-shift; bias is below 2^-64 * n.
    ((keyed_u64(seed, stream, a, b) as u128 * n as u128) >> 64) as usize
}
