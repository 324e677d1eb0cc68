#![allow(dead_code)]

use ndarray::{Array1, Array2};
use pual_core::similarity::{laplacian, mutual_knn_weights, KnnParams, LaplacianMatrix};
use pual_core::{Hyperparams, PUDataset};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn matrix(rng: &mut impl Rng, rows: usize, cols: usize, shift: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-2.0..2.0) + shift)
}

/// Positives shifted away from the unlabeled cloud so both losses matter.
pub fn random_pu(rng: &mut impl Rng, n_p: usize, n_u: usize, m: usize) -> PUDataset {
    let xp = matrix(rng, n_p, m, 1.0);
    let xu = matrix(rng, n_u, m, -0.3);
    PUDataset::from_blocks(xp, xu).unwrap()
}

pub fn random_hp(rng: &mut impl Rng, k: usize) -> Hyperparams {
    Hyperparams {
        cp: rng.random_range(0.2..2.0),
        cu: rng.random_range(0.01..0.5),
        lambda: rng.random_range(0.1..3.0),
        mu1: rng.random_range(0.5..2.0),
        knn: KnnParams::new(k, rng.random_range(0.5..5.0)),
    }
}

pub fn laplacian_of(data: &PUDataset, knn: &KnnParams) -> LaplacianMatrix {
    laplacian(&mutual_knn_weights(data.stacked().view(), knn).unwrap())
}

/// Central differences of `f` at `x`.
pub fn fd_gradient(f: impl Fn(&Array1<f64>) -> f64, x: &Array1<f64>, step: f64) -> Array1<f64> {
    let mut g = Array1::zeros(x.len());
    for j in 0..x.len() {
        let mut hi = x.clone();
        let mut lo = x.clone();
        hi[j] += step;
        lo[j] -= step;
        g[j] = (f(&hi) - f(&lo)) / (2.0 * step);
    }
    g
}

pub fn max_abs(v: &Array1<f64>) -> f64 {
    v.iter().fold(0.0f64, |a, b| a.max(b.abs()))
}

/// `fᵀRf` evaluated with the dense matrix.
pub fn quad(r: &LaplacianMatrix, f: &Array1<f64>) -> f64 {
    f.dot(&r.matrix().dot(f))
}
