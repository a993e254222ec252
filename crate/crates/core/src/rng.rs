//! Seeded random streams.
//!
//! Every stochastic routine draws from a [`ChaCha8Rng`] derived from a
//! `(seed, stream id)` pair, so a task's randomness does not depend on which
//! worker runs it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a seed with a stream id into an independent 64-bit seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ splitmix64(stream.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

/// The generator for stream `stream` under master seed `seed`.
pub fn stream(seed: u64, stream: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stream))
}

/// Two-level stream, e.g. (resampling, trajectory).
pub fn substream(seed: u64, outer: u64, inner: u64) -> StreamRng {
    stream(derive_seed(seed, outer), inner)
}
