//! Seed derivation for per-client, per-round random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::Round;

/// Stream purposes. Each one gets a disjoint seed lane so a client's data
/// shuffling never shares draws with its LDP noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 1,
    Partition = 2,
    Training = 3,
    Perturbation = 4,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `(run seed, stream, client, round)` into a single 64-bit seed.
pub fn derive_seed(run_seed: u64, stream: Stream, client: u32, round: Round) -> u64 {
    let mut h = splitmix64(run_seed);
    h = splitmix64(h ^ (stream as u64));
    h = splitmix64(h ^ u64::from(client));
    splitmix64(h ^ u64::from(round))
}

pub fn stream_rng(run_seed: u64, stream: Stream, client: u32, round: Round) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(run_seed, stream, client, round))
}
