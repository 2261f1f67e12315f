//! Named random sub-streams.
//!
//! Every random draw in a run comes from a ChaCha stream keyed by the run seed
//! plus a stream name (and optionally an index), so consumers never share
//! state and a run is a pure function of its seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Stream `name` of the run seeded with `seed`.
pub fn stream(seed: u64, name: &str) -> Rng {
    let mut rng = Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a(name.as_bytes()));
    rng
}

/// Indexed child of stream `name`, e.g. one per (property, round).
pub fn substream(seed: u64, name: &str, index: u64) -> Rng {
    let mut rng = Rng::seed_from_u64(splitmix64(seed ^ splitmix64(index)));
    rng.set_stream(fnv1a(name.as_bytes()));
    rng
}

/// Derived 64-bit seed for stream `name`, for APIs that take a plain seed.
pub fn derive_seed(seed: u64, name: &str, index: u64) -> u64 {
    splitmix64(splitmix64(seed ^ fnv1a(name.as_bytes())) ^ index)
}
