//! Seeded sampling shared by review-queue sampling, few-shot retrieval and
//! bootstrap resampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Derives an independent sub-seed for a named stream (a domain id, a
/// sentence number, a resample index) so that adding or removing one stream
/// never shifts the draws of another.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    // FNV-1a over the label, then a splitmix64 finalizer mixed with the seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(seed ^ h)
}

pub fn derive_seed_index(seed: u64, index: u64) -> u64 {
    splitmix64(seed.wrapping_add(index.wrapping_mul(0x9e37_79b9_7f4a_7c15)))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Draws `min(k, n)` distinct indices from `0..n`, uniformly without
/// replacement, in draw order (partial Fisher-Yates).
pub fn sample_indices(seed: u64, n: usize, k: usize) -> Vec<usize> {
    let k = k.min(n);
    let mut rng = rng(seed);
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.gen_range(i..n);
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool
}

/// Draws `n` indices from `0..n` with replacement.
pub fn resample_indices(seed: u64, n: usize) -> Vec<usize> {
    let mut rng = rng(seed);
    (0..n).map(|_| rng.gen_range(0..n)).collect()
}
