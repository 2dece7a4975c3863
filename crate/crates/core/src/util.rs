//! Seed derivation helpers.
//!
//! Every stochastic component draws from its own `ChaCha8Rng` seeded by
//! mixing the user seed with fixed salts and loop indices. Deriving streams
//! by key instead of sharing one RNG keeps outputs independent of iteration
//! interleaving (thread count, batch order within an epoch, and so on).

/// SplitMix64 finalizer. Cheap, well-distributed 64-bit mixer.
#[must_use]
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a list of keys into a single seed. Order matters.
#[must_use]
pub fn mix_seed(parts: &[u64]) -> u64 {
    let mut acc = 0x243F_6A88_85A3_08D3; // arbitrary nonzero start
    for &p in parts {
        acc = splitmix64(acc ^ splitmix64(p));
    }
    acc
}
