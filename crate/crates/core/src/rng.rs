//! Seed derivation for independent, order-free random streams.
//!
//! Every consumer of randomness derives its generator from a base seed plus
//! a small tuple of integers (a stage index, a block pair, a walk id). Streams
//! never depend on thread scheduling or partitioning, which is what makes
//! sharded and parallel runs reproduce serial ones bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_pcg::Pcg64Mcg;

/// splitmix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds `parts` into `seed`, producing a new well-mixed seed.
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(mix64(seed), |acc, &p| mix64(acc ^ mix64(p)))
}

/// A generator for the stream identified by `parts` under `seed`.
pub fn stream(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, parts))
}

/// Counter-addressed generator: the same `(seed, stream_id, position)` always
/// yields the same draws, independent of any other stream. Seeding is a few
/// multiplies, cheap enough for one generator per walk step.
pub fn positioned(seed: u64, stream_id: u64, position: u64) -> Pcg64Mcg {
    Pcg64Mcg::seed_from_u64(derive_seed(seed, &[stream_id, position]))
}
