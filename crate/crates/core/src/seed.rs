//! Seed derivation.
//!
//! Every source of randomness in a run is a `ChaCha8Rng` seeded from the run's
//! global seed mixed with a purpose tag and indices (client id, round, tree, ...).
//! Because seeds never depend on execution order, parallel and sequential
//! execution produce identical results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tags, so that e.g. the noise stream of client 3 in round 7 never
/// collides with its shuffling stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 1,
    LocalTrain = 2,
    LdpNoise = 3,
    Folds = 4,
    Forest = 5,
    Members = 6,
    Synth = 7,
    AttackCv = 8,
    Shuffle = 9,
    Protocol = 10,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(base: u64, stream: Stream, indices: &[u64]) -> u64 {
    let mut h = splitmix64(base ^ splitmix64(stream as u64));
    for &i in indices {
        h = splitmix64(h ^ splitmix64(i.wrapping_add(0x632b_e59b_d9b4_e019)));
    }
    h
}

pub fn rng_for(base: u64, stream: Stream, indices: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, stream, indices))
}
