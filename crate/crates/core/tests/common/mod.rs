#![allow(dead_code)]

use faer::{Col, Mat};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sls_core::{DenseMatrix, Plant, Vector};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> DenseMatrix {
    Mat::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

pub fn random_vector(rng: &mut impl Rng, n: usize) -> Vector {
    Col::from_fn(n, |_| rng.gen_range(-1.0..1.0))
}

/// Plant with entries in [-1, 1] and dimensions drawn from `1..=max_dim`.
pub fn random_plant(rng: &mut impl Rng, max_dim: usize) -> Plant {
    let nx = rng.gen_range(1..=max_dim);
    let nu = rng.gen_range(1..=max_dim);
    let ny = rng.gen_range(1..=max_dim);
    Plant::new(
        random_matrix(rng, nx, nx),
        random_matrix(rng, nx, nu),
        random_matrix(rng, ny, nx),
    )
    .unwrap()
}

/// Rank-`r` product of two random factors.
pub fn low_rank(rng: &mut impl Rng, rows: usize, cols: usize, r: usize) -> DenseMatrix {
    random_matrix(rng, rows, r) * random_matrix(rng, r, cols)
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + b.abs())
}
