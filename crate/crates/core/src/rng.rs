//! Seeded random streams.
//!
//! Every random quantity in the crate comes from ChaCha20 (`rand_chacha`),
//! keyed by a 256-bit seed and a 64-bit stream id. Uniforms are
//! `(next_u64 >> 11) * 2^-53`; normals use the Box–Muller transform on two
//! consecutive uniforms, cosine branch only. Both definitions are simple
//! enough to reproduce in another language.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// A ChaCha20 stream keyed by up to four 64-bit words.
pub fn stream(key: &[u64], stream_id: u64) -> ChaCha20Rng {
    assert!(key.len() <= 4, "key holds at most four words");
    let mut seed = [0u8; 32];
    for (chunk, word) in seed.chunks_exact_mut(8).zip(key) {
        chunk.copy_from_slice(&word.to_le_bytes());
    }
    let mut rng = ChaCha20Rng::from_seed(seed);
    rng.set_stream(stream_id);
    rng
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a sequence of identifiers.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x6D65_6465_7374_696D, |acc, &p| mix(acc ^ mix(p)))
}

pub fn uniform(rng: &mut impl Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub fn standard_normal(rng: &mut impl Rng) -> f64 {
    // 1 - u keeps the log argument in (0, 1]
    let u1 = 1.0 - uniform(rng);
    let u2 = uniform(rng);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Fisher–Yates permutation of `0..n`, driven by [`uniform`].
pub fn permutation(n: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = ((uniform(rng) * (i + 1) as f64) as usize).min(i);
        idx.swap(i, j);
    }
    idx
}
