//! Seeded inputs shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rpd_core::nn::Tensor2;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform entries in `[-1, 1)`.
pub fn random_tensor(rows: usize, cols: usize, seed: u64) -> Tensor2 {
    let mut r = rng(seed);
    let data = (0..rows * cols)
        .map(|_| r.random_range(-1.0..1.0))
        .collect();
    Tensor2::from_vec(rows, cols, data).expect("shape matches")
}

/// Points uniform in the square `[-1, 1)^2`.
pub fn random_points(n: usize, seed: u64) -> Vec<[f64; 2]> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)])
        .collect()
}
