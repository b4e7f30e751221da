//! Reproducible random streams.
//!
//! Every stochastic step draws from a ChaCha8 generator whose seed is derived
//! from a master seed, a purpose tag and a path of indices (replication,
//! entity, ...). Streams never depend on how many draws other streams made,
//! so replications can run in any order or in parallel.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tags mixed into derived seeds. The numeric values are part of the
/// reproducibility contract and must not change.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamTag {
    Simulation = 1,
    Windows = 2,
    Histogram = 3,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds `path` into `master` with SplitMix64 finalisation at every step.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(master), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn stream(master: u64, tag: StreamTag, path: &[u64]) -> ChaCha8Rng {
    let mut full = Vec::with_capacity(path.len() + 1);
    full.push(tag as u64);
    full.extend_from_slice(path);
    ChaCha8Rng::seed_from_u64(derive_seed(master, &full))
}
