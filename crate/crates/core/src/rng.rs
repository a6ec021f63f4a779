//! Seeded random number generation.
//!
//! Every stochastic decision in the engine, the agents and the planner draws
//! from [`GameRng`], which is xoshiro256** (Blackman & Vigna). A 64-bit seed
//! expands to the 256-bit state through SplitMix64:
//!
//! ```text
//! z = (x += 0x9E3779B97F4A7C15)
//! z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//! z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//! z ^ (z >> 31)
//! ```
//!
//! and the generator step is
//!
//! ```text
//! out = rotl(s1 * 5, 7) * 9
//! t = s1 << 17
//! s2 ^= s0; s3 ^= s1; s1 ^= s2; s0 ^= s3; s2 ^= t; s3 = rotl(s3, 45)
//! ```

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256StarStar;

pub type GameRng = Xoshiro256StarStar;

pub fn rng_from_seed(seed: u64) -> GameRng {
    GameRng::seed_from_u64(seed)
}

/// Derives an independent stream seed from a base seed and a stream index
/// (one SplitMix64 output of `base ^ golden * (index + 1)`).
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index.wrapping_add(1));
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
