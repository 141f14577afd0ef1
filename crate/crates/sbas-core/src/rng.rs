//! Counter-based deterministic noise.
//!
//! Every random draw is a pure function of `(seed, stream, counter)`, so a
//! simulation produces bit-identical output no matter how pixels or pairs are
//! scheduled across threads. `stream` namespaces independent noise sources
//! (one per interferogram, one per atmospheric screen), `counter` is the
//! pixel index within the stream.

/// splitmix64 finalizer: a cheap 64-bit avalanche.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hash a (seed, stream, counter) triple to 64 uniformly mixed bits.
#[inline]
pub fn hash3(seed: u64, stream: u64, counter: u64) -> u64 {
    mix64(mix64(mix64(seed ^ 0x9e37_79b9_7f4a_7c15) ^ stream) ^ counter)
}

/// Map 64 hashed bits to a uniform double in (0, 1].
#[inline]
fn uniform01(bits: u64) -> f64 {
    ((bits >> 11) as f64 + 1.0) * (1.0 / 9_007_199_254_740_992.0)
}

/// Standard normal deviate for a (seed, stream, counter) triple, via
/// Box-Muller on two decorrelated uniforms. The open-interval mapping keeps
/// `ln` away from zero.
#[inline]
pub fn standard_normal(seed: u64, stream: u64, counter: u64) -> f64 {
    let h = hash3(seed, stream, counter);
    let u1 = uniform01(mix64(h ^ 0x243f_6a88_85a3_08d3));
    let u2 = uniform01(mix64(h ^ 0x1319_8a2e_0370_7344));
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Stream id for per-interferogram phase noise.
#[inline]
pub fn pair_stream(master_idx: usize, slave_idx: usize) -> u64 {
    0x4e4f_4953_0000_0000 ^ (((master_idx as u64) << 32) | slave_idx as u64)
}

/// Stream id for the atmospheric screen of one epoch.
#[inline]
pub fn atmosphere_stream(epoch_idx: usize) -> u64 {
    0x4154_4d4f_0000_0000 ^ epoch_idx as u64
}
