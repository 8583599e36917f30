//! Seeded randomness. All sampling in the crate goes through ChaCha8 so that
//! reports are reproducible across platforms.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform sample from `[0, 1)` with 53 random bits.
pub fn unit_interval(rng: &mut dyn RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
