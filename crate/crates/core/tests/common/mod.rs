#![allow(dead_code)]

pub mod oracle;

use ec3_core::{ClassDistributions, EnsembleInput};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random base outputs: `c1 >= 1` classifiers with labels in `1..=l` and
/// `c2` clusterings with ids in `0..max_clusters`.
pub fn random_input(n: usize, l: usize, c1: usize, c2: usize, max_clusters: i64, seed: u64) -> EnsembleInput {
    let mut r = rng(seed);
    let classifiers = (0..c1).map(|_| (0..n).map(|_| r.gen_range(1..=l)).collect()).collect();
    let clusterings = (0..c2).map(|_| (0..n).map(|_| r.gen_range(0..max_clusters)).collect()).collect();
    EnsembleInput::new(l, classifiers, clusterings, None).unwrap()
}

pub fn random_stochastic(rows: usize, cols: usize, r: &mut ChaCha8Rng) -> Array2<f64> {
    let mut m = Array2::from_shape_fn((rows, cols), |_| r.gen::<f64>() + 1e-3);
    for mut row in m.rows_mut() {
        let s = row.sum();
        row /= s;
    }
    m
}

pub fn random_distributions(n: usize, g: usize, l: usize, r: &mut ChaCha8Rng) -> ClassDistributions {
    ClassDistributions {
        objects: random_stochastic(n, l, r),
        groups: random_stochastic(g, l, r),
    }
}

/// Symmetric positive matrix with a symmetric random zero pattern and a
/// positive diagonal.
pub fn random_symmetric(n: usize, zero_fraction: f64, r: &mut ChaCha8Rng) -> Array2<f64> {
    let mut a = Array2::zeros((n, n));
    for i in 0..n {
        a[[i, i]] = r.gen_range(0.1..2.0);
        for j in (i + 1)..n {
            if r.gen::<f64>() >= zero_fraction {
                let v = r.gen_range(0.01..3.0);
                a[[i, j]] = v;
                a[[j, i]] = v;
            }
        }
    }
    a
}

/// Symmetric doubly stochastic matrix: a convex combination of
/// symmetrized permutation matrices.
pub fn exact_bistochastic(n: usize, terms: usize, r: &mut ChaCha8Rng) -> Array2<f64> {
    let weights: Vec<f64> = (0..terms).map(|_| r.gen::<f64>() + 0.1).collect();
    let total: f64 = weights.iter().sum();
    let mut k = Array2::zeros((n, n));
    for w in weights {
        let mut p: Vec<usize> = (0..n).collect();
        p.shuffle(r);
        for (i, &j) in p.iter().enumerate() {
            k[[i, j]] += 0.5 * w / total;
            k[[j, i]] += 0.5 * w / total;
        }
    }
    k
}
