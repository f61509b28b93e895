//! Named RNG substreams fanned out from one user seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

/// Derives an independent generator for `name` from `seed`. The same
/// `(seed, name)` pair always yields the same stream.
pub fn substream(seed: u64, name: &str) -> Rng {
    Rng::from_seed(substream_seed(seed, name))
}

pub fn substream_seed(seed: u64, name: &str) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(name.as_bytes());
    hasher.finalize().into()
}

/// Derives a child `u64` seed, for handing to components that take a plain seed.
pub fn child_seed(seed: u64, name: &str) -> u64 {
    let bytes = substream_seed(seed, name);
    u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"))
}
