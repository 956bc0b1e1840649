//! Seeded, splittable random streams.
//!
//! Every consumer of randomness derives its generator from a master seed, a
//! domain tag and an index. Streams for different indices are independent, so
//! work items can be generated in any order (or in parallel) and still
//! reproduce bit-identically.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Domain tags keep unrelated consumers of the same master seed apart.
pub mod domain {
    pub const PAIRS: u64 = 0x7061_6972;
    pub const BOOTSTRAP: u64 = 0x626f_6f74;
    pub const ORACLE: u64 = 0x6f72_6163;
    pub const INITIAL: u64 = 0x696e_6974;
    pub const TRAJECTORY: u64 = 0x7472_616a;
}

/// Generator for work item `index` of `domain` under `seed`.
pub fn substream(seed: u64, domain: u64, index: u64) -> StreamRng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&domain.to_le_bytes());
    key[16..24].copy_from_slice(b"embedtub");
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}
