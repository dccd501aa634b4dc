//! Deterministic random streams.
//!
//! Every simulated subject draws from its own ChaCha8 stream, seeded by
//! folding `(base_seed, scenario_key, replicate, subject)` through the
//! SplitMix64 finalizer. Streams therefore do not depend on the order in
//! which subjects or replicates are processed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used for all simulation.
pub type SimRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fold a sequence of words into one seed.
pub fn mix_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(0u64, |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// Seed of replicate `replicate` of scenario `scenario_key`.
pub fn replicate_seed(base_seed: u64, scenario_key: u64, replicate: u64) -> u64 {
    mix_seed(&[base_seed, scenario_key, replicate])
}

/// Stream of subject `subject` within a trial seeded by `trial_seed`.
pub fn subject_rng(trial_seed: u64, subject: u64) -> SimRng {
    SimRng::seed_from_u64(mix_seed(&[trial_seed, subject]))
}

/// Stable 64-bit FNV-1a hash, used to key custom scenario labels.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}
