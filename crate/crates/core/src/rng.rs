//! Seed handling.
//!
//! Every random quantity is drawn from a ChaCha8 stream keyed by a 64-bit
//! seed and a stream id. Streams with different ids are independent, so the
//! covariates, the Brownian increments and the factor search of one
//! replicate never share randomness, and replicate seeds can be derived
//! from a master seed by position alone.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent random streams used by the toolkit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Covariates,
    Brownian,
    Theta0,
    FactorSearch,
    Replicate,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Covariates => 1,
            Stream::Brownian => 2,
            Stream::Theta0 => 3,
            Stream::FactorSearch => 4,
            Stream::Replicate => 5,
        }
    }
}

/// A generator for `stream` under `seed`.
pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.id());
    rng
}

/// Derives a child seed from `master` at position (`group`, `index`).
///
/// This is a pure counter lookup: the child seed is the `index`-th output
/// word of the ChaCha8 stream selected by `group`, so children can be
/// computed in any order.
pub fn derive_seed(master: u64, group: u64, index: u64) -> u64 {
    use rand::RngCore;
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream((Stream::Replicate.id() << 56) ^ group);
    rng.set_word_pos(u128::from(index) * 2);
    rng.next_u64()
}
