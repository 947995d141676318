//! Input generators shared by the ordering benchmarks.

use grab_core::rng::substream;
use grab_core::{Permutation, VectorSet};
use rand::Rng;

/// `n` vectors with uniform `[-1, 1)` coordinates.
pub fn uniform_set(n: usize, d: usize, seed: u64) -> VectorSet {
    let mut rng = substream(seed, 0xbe, 0);
    let data = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
    VectorSet::from_flat(n, d, data).expect("finite")
}

pub fn random_order(n: usize, seed: u64) -> Permutation {
    Permutation::random(n, &mut substream(seed, 0xbe, 1))
}
