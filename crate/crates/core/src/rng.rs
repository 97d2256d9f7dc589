//! Seeded random streams.
//!
//! Every stochastic operation takes an explicit seed. Independent consumers of
//! the same seed use different ChaCha stream ids so their draws never overlap.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng as Rng;

pub mod stream {
    pub const INIT: u64 = 1;
    pub const MESH_SAMPLE: u64 = 2;
    pub const NOISE: u64 = 3;
    pub const KMEANS: u64 = 4;
    pub const UV: u64 = 5;
    pub const STATIC_POOL: u64 = 6;
    pub const PRIOR: u64 = 7;
    pub const TRAIN: u64 = 8;
}

/// A generator for `seed` on the given stream.
pub fn seeded(seed: u64, stream: u64) -> Rng {
    let mut rng = Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
