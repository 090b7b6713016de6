//! Reproducible random number generation.
//!
//! Every stochastic operation in the crate draws from a ChaCha8 stream
//! seeded through [`derive_seed`], so any run is a pure function of the
//! user-facing seeds. Parallel per-sample work uses streams derived from
//! `(global_seed, sample_index)` and therefore matches the serial run
//! byte for byte.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The crate-wide generator: ChaCha with 8 rounds.
pub type Rng = ChaCha8Rng;

/// SplitMix64 finalizer; a fixed, documented 64-bit mixing function.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a base seed with labelled context values into a new stream seed.
///
/// `derive_seed(s, &[a, b])` folds each part through SplitMix64, so
/// distinct `(seed, parts)` combinations get decorrelated streams.
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    let mut h = splitmix64(seed);
    for &p in parts {
        h = splitmix64(h ^ p);
    }
    h
}

/// A ChaCha8 generator for the given stream seed.
pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn same_seed_same_stream() {
        let a: Vec<u64> = (0..16).map(|_| rng_from_seed(42).random()).collect();
        let mut r = rng_from_seed(42);
        let b: Vec<u64> = (0..16).map(|_| r.random()).collect();
        assert_eq!(a[0], b[0]);
        let mut r2 = rng_from_seed(42);
        let c: Vec<u64> = (0..16).map(|_| r2.random()).collect();
        assert_eq!(b, c);
    }

    #[test]
    fn derived_streams_differ_by_part() {
        let s1 = derive_seed(7, &[0, 1]);
        let s2 = derive_seed(7, &[0, 2]);
        let s3 = derive_seed(7, &[1, 0]);
        assert_ne!(s1, s2);
        assert_ne!(s1, s3);
        assert_eq!(s1, derive_seed(7, &[0, 1]));
    }
}
