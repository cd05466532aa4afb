//! Seeding scheme shared by every stochastic operation.
//!
//! All randomness comes from ChaCha8, whose output stream is fixed by the
//! algorithm and therefore identical across platforms. A shot with global
//! index `i` in a run with base seed `s` always draws from the stream seeded
//! by `s + i`, so results do not depend on how shots are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[inline]
pub fn shot_rng(base_seed: u64, shot_index: u64) -> SimRng {
    seeded(base_seed.wrapping_add(shot_index))
}

/// Independent stream for bookkeeping draws (ordering, etc.) that must not
/// collide with any shot stream of the same run.
pub fn aux_rng(base_seed: u64, tag: u64) -> SimRng {
    let mut rng = seeded(base_seed ^ 0x9e37_79b9_7f4a_7c15);
    rng.set_stream(tag.wrapping_add(1));
    rng
}
