//! Seeded random number generation.
//!
//! Every stochastic step (phantom sampling, photon noise, weight
//! initialization, sample shuffling) draws from [`Pcg32`]: the PCG-XSH-RR
//! generator with a 64-bit LCG state (multiplier 6364136223846793005) and
//! 32-bit output, seeded through `SeedableRng::seed_from_u64`. Its output
//! stream is fixed by the algorithm, so datasets regenerate identically on
//! every platform.

pub use rand_pcg::Pcg32;
use rand::SeedableRng;

pub fn seeded(seed: u64) -> Pcg32 {
    Pcg32::seed_from_u64(seed)
}

/// Derives an independent stream for a sub-task (e.g. one epoch or one sample).
pub fn substream(seed: u64, index: u64) -> Pcg32 {
    // splitmix64 finalizer over the pair
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    seeded(z ^ (z >> 31))
}
