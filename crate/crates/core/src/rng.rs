//! Deterministic random number generation.
//!
//! Every stochastic operation in this crate takes an explicit 64-bit seed
//! and draws from the ChaCha12 stream cipher generator
//! ([`rand_chacha::ChaCha12Rng`]), whose output is specified independently
//! of platform, word size, and crate version. Parallelizable subtasks
//! (bootstrap trees, resamples, permutations) use child seeds from
//! [`derive_seed`] so results never depend on execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// The crate-wide seeded generator.
pub type SeededRng = ChaCha12Rng;

/// Build the named generator from a 64-bit seed.
pub fn rng_from_seed(seed: u64) -> SeededRng {
    SeededRng::seed_from_u64(seed)
}

/// Derive an independent child seed for subtask `index`.
///
/// Uses the SplitMix64 finalizer on `seed XOR mix(index)`, so distinct
/// `(seed, index)` pairs map to well-separated child seeds and
/// `derive_seed(s, 0) != s` (no accidental stream reuse).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index.wrapping_add(0x9E37_79B9_7F4A_7C15)))
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
