//! Counter-based random streams.
//!
//! Every random draw in the crate comes from a ChaCha stream keyed by
//! `(seed, domain, index)`, so per-sample work can run in any order (or in
//! parallel) and still produce bit-identical output.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Separates the random streams used for different purposes under one seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Scenario = 1,
    Split = 2,
    Init = 3,
    Shuffle = 4,
    Gaussian = 5,
    Pool = 6,
    Malicious = 7,
    Bootstrap = 8,
    Instances = 9,
}

/// Deterministic stream for item `index` of `domain` under `seed`.
pub fn stream(seed: u64, domain: Domain, index: u64) -> ChaCha12Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(domain as u64).to_le_bytes());
    key[16..24].copy_from_slice(b"dmimoadv");
    let mut rng = ChaCha12Rng::from_seed(key);
    rng.set_stream(index);
    rng
}
