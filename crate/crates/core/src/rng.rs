//! Seeded random streams.
//!
//! Every random consumer receives a [`ChaCha8Rng`] built from a master seed
//! and a stream id. The stream id encodes the purpose (simulation, chunk,
//! sweep point, bootstrap) so that adding a consumer never perturbs another.
//! Streams for the same `(seed, id)` are identical on every platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use rand_chacha::ChaCha8Rng as StreamRng;

/// Stream ids reserved for top-level consumers. Chunked consumers add their
/// chunk index to [`streams::CHUNK_BASE`].
pub mod streams {
    pub const ENSEMBLE: u64 = 0;
    pub const INITIAL: u64 = 1;
    pub const ORACLE: u64 = 2;
    pub const BOOTSTRAP: u64 = 3;
    pub const AUDIT: u64 = 4;
    pub const SWEEP_BASE: u64 = 1 << 20;
    pub const CHUNK_BASE: u64 = 1 << 32;
}

pub fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Derives the master seed for point `index` of a sweep.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
