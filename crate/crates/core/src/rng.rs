//! Seeded random streams.
//!
//! Every stochastic component draws from a 64-bit PCG generator so runs are
//! byte-identical across platforms for a given seed.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_pcg::Pcg64;

pub type StreamRng = Pcg64;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn stream(seed: u64) -> StreamRng {
    Pcg64::seed_from_u64(seed)
}

/// Independent stream number `counter` derived from `seed`.
pub fn substream(seed: u64, counter: u64) -> StreamRng {
    Pcg64::seed_from_u64(splitmix64(seed ^ splitmix64(counter.wrapping_add(1))))
}

/// Mix a seed with an arbitrary tag; used to give each experiment cell its own stream.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    splitmix64(seed.wrapping_add(tag.wrapping_mul(GOLDEN_GAMMA)))
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A draw from N(0, 1)^dim.
pub fn standard_normal(rng: &mut StreamRng, dim: usize) -> DVector<f64> {
    DVector::from_fn(dim, |_, _| rng.sample(StandardNormal))
}

/// Uniform integer in `0..bound` that depends only on the generator's u64 output.
pub fn below(rng: &mut StreamRng, bound: usize) -> usize {
    debug_assert!(bound > 0);
    rng.random_range(0..bound as u64) as usize
}

/// In-place Fisher-Yates shuffle pinned to [`below`].
pub fn shuffle<T>(rng: &mut StreamRng, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = below(rng, i + 1);
        items.swap(i, j);
    }
}
