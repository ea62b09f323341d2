//! Reproducible RNG streams.
//!
//! A trial's generator is seeded with `master ^ trial_index`; independent
//! streams inside a trial (one per coordinate, one for test pairs, ...) are
//! separate ChaCha stream ids on the same key, so results do not depend on
//! how trials are scheduled across workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type TrialRng = ChaCha8Rng;

/// Stream ids used inside one trial. Coordinates take `COORD_BASE + j`.
pub mod stream {
    pub const INSTANCE: u64 = 0;
    pub const BASELINE: u64 = 1;
    pub const COORD_BASE: u64 = 1 << 32;
    pub const TEST_BASE: u64 = 2 << 32;
}

pub fn trial_seed(master: u64, trial: u64) -> u64 {
    master ^ trial
}

pub fn derive_rng(master: u64, trial: u64, stream_id: u64) -> TrialRng {
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(master, trial));
    rng.set_stream(stream_id);
    rng
}

pub fn coordinate_rng(master: u64, trial: u64, j: usize) -> TrialRng {
    derive_rng(master, trial, stream::COORD_BASE + j as u64)
}

/// Stream for the test pairs of coordinate `j`, disjoint from its kernel stream.
pub fn test_pair_rng(master: u64, trial: u64, j: usize) -> TrialRng {
    derive_rng(master, trial, stream::TEST_BASE + j as u64)
}
