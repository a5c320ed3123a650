//! Seeded random streams.
//!
//! Every stochastic operation takes an explicit stream derived from a 64-bit
//! seed and a path of indices (patient, replicate, epoch, ...). Streams are
//! ChaCha8 with the path hashed into the stream id, so two different paths
//! never share a sequence and the draw order inside one stream does not
//! depend on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream for `seed` addressed by `path`.
pub fn stream(seed: u64, path: &[u64]) -> StreamRng {
    let mut id = splitmix64(path.len() as u64);
    for &p in path {
        id = splitmix64(id ^ splitmix64(p));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Well-known stream ids so unrelated subsystems never collide.
pub mod domain {
    pub const INIT: u64 = 1;
    pub const SHUFFLE: u64 = 2;
    pub const DROPOUT: u64 = 3;
    pub const MASKING: u64 = 4;
    pub const SPLIT: u64 = 5;
    pub const SYNTH: u64 = 6;
    pub const BOOTSTRAP: u64 = 7;
}
