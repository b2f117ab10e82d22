//! Seeded random streams.
//!
//! Every stream is a ChaCha8 generator keyed by a 64-bit seed and a stream
//! number. ChaCha is counter based, so distinct `(seed, stream)` pairs give
//! independent sequences that never depend on how many values a sibling
//! stream has consumed.
//!
//! Sub-seeds are derived with [`split_seed`], which folds `(master, tag, index)`
//! through the SplitMix64 finalizer:
//!
//! ```text
//! s = mix(mix(master ^ 0x9E3779B97F4A7C15) ^ tag)
//! s = mix(s ^ index)
//! ```
//!
//! where `mix` is the SplitMix64 output function. Tags for named entities are
//! 64-bit FNV-1a hashes of the name ([`name_tag`]), so adding an entity never
//! changes the seeds of the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used everywhere in the crate.
pub type SimRng = ChaCha8Rng;

/// Stream numbers reserved for the parts of one repetition.
pub mod streams {
    pub const THETA: u64 = 0;
    pub const ARMS: u64 = 1;
    pub const REWARDS: u64 = 2;
    pub const POLICY: u64 = 3;
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent sub-seed for `(tag, index)` under `master`.
pub fn split_seed(master: u64, tag: u64, index: u64) -> u64 {
    let s = mix(mix(master ^ GOLDEN) ^ tag);
    mix(s ^ index)
}

/// 64-bit FNV-1a hash of a name, used as a [`split_seed`] tag.
pub fn name_tag(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Opens stream `stream` of the generator keyed by `seed`.
pub fn stream(seed: u64, stream: u64) -> SimRng {
    let mut rng = SimRng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
