//! Seeded, counter-based random streams.
//!
//! Every random stream in the crate is a ChaCha8 keystream. Replica `r` of an
//! experiment with master seed `s` always draws from `replica_rng(s, r)`, so a
//! full experiment is reproducible from `(s, replica count)` regardless of how
//! replicas are scheduled onto threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type ZrpRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> ZrpRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for replica `replica` under `master`.
pub fn replica_seed(master: u64, replica: u64) -> u64 {
    mix64(master ^ mix64(replica.wrapping_add(0x5A5A_5A5A)))
}

pub fn replica_rng(master: u64, replica: u64) -> ZrpRng {
    seeded(replica_seed(master, replica))
}
