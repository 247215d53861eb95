//! Seeded, splittable random number generation.
//!
//! No function in this crate touches a global generator; every draw goes
//! through an explicit `&mut R`.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The generator used throughout the crate.
pub type NngRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> NngRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent generator for worker `stream` of a run seeded with `seed`.
///
/// Streams are addressable up front, so parallel workers reproduce the
/// serial seed assignment exactly.
pub fn stream(seed: u64, stream: u64) -> NngRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derive a child seed from the parent generator.
pub fn split_seed<R: RngCore + ?Sized>(rng: &mut R) -> u64 {
    rng.next_u64()
}

/// Child generator drawn from the parent.
pub fn split<R: RngCore + ?Sized>(rng: &mut R) -> NngRng {
    seeded(rng.next_u64())
}
