//! Deterministic random streams.
//!
//! Every random decision in a run draws from a stream keyed by the master seed,
//! a domain tag and up to two indices (typically round and client). Streams are
//! independent of execution order, so rounds and clients can be processed in any
//! order or in parallel and still reproduce the same outcomes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// What a stream is used for. Distinct domains never share randomness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Domain {
    Population = 1,
    Dataset = 2,
    Partition = 3,
    Status = 4,
    Selection = 5,
    LocalUpdate = 6,
    Candidates = 7,
    Oracle = 8,
    ModelInit = 9,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream for `(seed, domain, a, b)`.
pub fn stream(seed: u64, domain: Domain, a: u64, b: u64) -> SimRng {
    let mut key = [0u8; 32];
    let mut h = splitmix64(seed);
    for (chunk, word) in key
        .chunks_exact_mut(8)
        .zip([domain as u64, a, b, 0x5EED])
    {
        h = splitmix64(h ^ word);
        chunk.copy_from_slice(&h.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
