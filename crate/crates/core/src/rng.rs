//! Seed derivation for reproducible Monte Carlo trials.
//!
//! Every trial owns an independent ChaCha8 stream selected by
//! `(master_seed, trial_index)`, so the draws a trial sees never depend on
//! how trials are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Random source handed to every sampling routine.
pub type SimRng = ChaCha8Rng;

/// Stream for trial `index` under `master_seed`.
pub fn trial_rng(master_seed: u64, index: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Generator for one-off draws that are not part of a trial sequence.
pub fn seeded(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}
