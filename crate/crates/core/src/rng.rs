//! Counter-based seed derivation so parallel generation is order-independent.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a base seed with a stream label and a counter.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(base ^ splitmix64(stream)).wrapping_add(index))
}

pub fn rng_for(base: u64, stream: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, stream, index))
}

pub mod stream {
    pub const CHANNEL: u64 = 1;
    pub const BITS: u64 = 2;
    pub const NOISE: u64 = 3;
    pub const PILOTS: u64 = 4;
    pub const SAMPLE: u64 = 5;
    pub const EBNO: u64 = 6;
    pub const INIT: u64 = 7;
    pub const SHUFFLE: u64 = 8;
    pub const CALIBRATION: u64 = 9;
    pub const BOOTSTRAP: u64 = 10;
}
