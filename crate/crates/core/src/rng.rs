//! Deterministic random streams.
//!
//! Every random decision draws from a ChaCha stream selected by
//! `(seed, purpose, index)`, so results do not depend on thread scheduling
//! or on how many draws other components made.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Mutation = 1,
    Island = 2,
    Policy = 3,
    Analysis = 4,
}

pub fn stream(seed: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 56) ^ index);
    rng
}

/// Per-call seed forwarded to model endpoints that accept one.
pub fn call_seed(seed: u64, call_index: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ call_index.wrapping_mul(0xBF58_476D_1CE4_E5B9)
}
