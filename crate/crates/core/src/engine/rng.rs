//! Counter-based per-trial randomness.
//!
//! Every trial gets its own generator, keyed by `(seed, trial_id, stream)`.
//! No state is carried between trials, so any partition of trial indices
//! across workers yields the same draws as a sequential run.

use rand::SeedableRng;
use rand_pcg::Pcg64Mcg;

pub type TrialRng = Pcg64Mcg;

/// Independent random streams within one trial.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Source = 1,
    InstrumentA = 2,
    InstrumentB = 3,
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a seed with two counters into a new 64-bit key.
pub fn derive_seed(seed: u64, first: u64, second: u64) -> u64 {
    let z = splitmix64(seed ^ splitmix64(first));
    splitmix64(z ^ splitmix64(second.wrapping_add(0x632b_e59b_d9b4_e019)))
}

pub fn trial_rng(seed: u64, trial_id: u64, stream: Stream) -> TrialRng {
    TrialRng::seed_from_u64(derive_seed(seed, trial_id, stream as u64))
}
