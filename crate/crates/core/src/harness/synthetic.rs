//! Seeded Gaussian blob data.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub num_objects: usize,
    pub num_classes: usize,
    pub feature_dim: usize,
    /// Minimum distance between two class centers, in units of the
    /// (unit) noise standard deviation.
    pub cluster_separation: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_objects: 600,
            num_classes: 3,
            feature_dim: 4,
            cluster_separation: 3.0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 || self.num_objects < self.num_classes || self.feature_dim == 0 {
            return Err(Error::InvalidParams(format!(
                "synthetic data needs l >= 2, N >= l and d >= 1 (got N={}, l={}, d={})",
                self.num_objects, self.num_classes, self.feature_dim
            )));
        }
        if !(self.cluster_separation > 0.0 && self.cluster_separation.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "cluster separation must be positive, got {}",
                self.cluster_separation
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Array2<f64>,
    /// 1-based.
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(ndarray::Axis(0), rows),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        }
    }

    pub fn class_sizes(&self) -> Vec<usize> {
        let mut c = vec![0; self.num_classes];
        for &y in &self.labels {
            c[y - 1] += 1;
        }
        c
    }
}

/// Class centers with every pairwise distance at least `sep`.
fn centers(l: usize, d: usize, sep: f64) -> Array2<f64> {
    let mut c = Array2::zeros((l, d));
    if d >= l {
        // Scaled unit vectors: all pairwise distances exactly `sep`.
        for k in 0..l {
            c[[k, k]] = sep / std::f64::consts::SQRT_2;
        }
    } else if d >= 2 {
        let r = sep / (2.0 * (std::f64::consts::PI / l as f64).sin());
        for k in 0..l {
            let t = 2.0 * std::f64::consts::PI * k as f64 / l as f64;
            c[[k, 0]] = r * t.cos();
            c[[k, 1]] = r * t.sin();
        }
    } else {
        for k in 0..l {
            c[[k, 0]] = sep * k as f64;
        }
    }
    c
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let (n, l, d) = (spec.num_objects, spec.num_classes, spec.feature_dim);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut labels: Vec<usize> = (0..n).map(|i| i % l + 1).collect();
    labels.shuffle(&mut rng);
    let c = centers(l, d, spec.cluster_separation);
    let mut features = Array2::zeros((n, d));
    for (i, &y) in labels.iter().enumerate() {
        for k in 0..d {
            let z: f64 = StandardNormal.sample(&mut rng);
            features[[i, k]] = c[[y - 1, k]] + z;
        }
    }
    Ok(Dataset {
        features,
        labels,
        num_classes: l,
    })
}

/// 150 points in four dimensions: one class well apart, two overlapping.
pub fn iris_like(seed: u64) -> Dataset {
    let centers = [
        [0.0, 0.0, 0.0, 0.0],
        [5.0, 3.0, 0.0, 0.0],
        [7.0, 4.5, 1.0, 0.5],
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<usize> = (0..150).map(|i| i % 3 + 1).collect();
    labels.shuffle(&mut rng);
    let mut features = Array2::zeros((150, 4));
    for (i, &y) in labels.iter().enumerate() {
        for k in 0..4 {
            let z: f64 = StandardNormal.sample(&mut rng);
            features[[i, k]] = centers[y - 1][k] + 0.8 * z;
        }
    }
    Dataset {
        features,
        labels,
        num_classes: 3,
    }
}
