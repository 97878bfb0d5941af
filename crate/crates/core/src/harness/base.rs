//! Running the built-in base methods on a dataset split.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::learners::{kmeans_select, knn, nearest_centroid, single_linkage, Stump};
use super::synthetic::Dataset;
use crate::ensemble::EnsembleInput;
use crate::error::{Error, Result};

pub const CLASSIFIER_NAMES: [&str; 3] = ["nearest_centroid", "knn5", "stump"];
pub const CLUSTERER_NAMES: [&str; 2] = ["kmeans", "single_linkage"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for Split {
    fn default() -> Self {
        Self {
            train: 0.6,
            validation: 0.2,
            test: 0.2,
        }
    }
}

impl Split {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.validation, self.test];
        if parts.iter().any(|&p| !(0.0..=1.0).contains(&p)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParams(format!(
                "split fractions {parts:?} must be in [0, 1] and sum to 1"
            )));
        }
        Ok(())
    }

    /// Shuffled (train, validation, test) index sets.
    pub fn indices(&self, n: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
        self.validate()?;
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_train = (self.train * n as f64).round() as usize;
        let n_val = ((self.validation * n as f64).round() as usize).min(n - n_train.min(n));
        let n_train = n_train.min(n);
        let test = idx.split_off(n_train + n_val);
        let val = idx.split_off(n_train);
        if idx.is_empty() || test.is_empty() {
            return Err(Error::InvalidInput(format!(
                "degenerate split of {n} objects: {} train, {} test",
                idx.len(),
                test.len()
            )));
        }
        Ok((idx, val, test))
    }
}

#[derive(Debug, Clone)]
pub struct BaseRun {
    /// Base outputs on the test objects, with their true labels attached.
    pub input: EnsembleInput,
    pub test_indices: Vec<usize>,
}

impl BaseRun {
    pub fn truth(&self) -> &[usize] {
        self.input.true_labels().expect("base runs carry truth")
    }
}

/// Three classifiers trained on the training split (the stump picks its
/// feature on the validation split) and two clusterers run on all objects,
/// all reported on the test split.
pub fn run_base_methods(data: &Dataset, split: Split, seed: u64) -> Result<BaseRun> {
    let (train, val, test) = split.indices(data.len(), seed)?;
    let l = data.num_classes;
    let tr = data.subset(&train);
    let te = data.subset(&test);
    let va = if val.is_empty() { tr.clone() } else { data.subset(&val) };

    let classifiers = vec![
        nearest_centroid(tr.features.view(), &tr.labels, l, te.features.view()),
        knn(tr.features.view(), &tr.labels, l, te.features.view(), 5),
        Stump::fit(tr.features.view(), &tr.labels, l, va.features.view(), &va.labels)
            .predict(te.features.view()),
    ];
    let km = kmeans_select(data.features.view(), l, seed);
    let sl = single_linkage(data.features.view(), l);
    let on_test = |a: &[usize]| test.iter().map(|&i| a[i] as i64).collect::<Vec<_>>();
    let clusterers = vec![on_test(&km.assignment), on_test(&sl)];
    let input = EnsembleInput::new(l, classifiers, clusterers, Some(te.labels.clone()))?;
    Ok(BaseRun {
        input,
        test_indices: test,
    })
}

/// Most frequent classifier label per object; ties go to the lowest class.
pub fn majority_vote(input: &EnsembleInput) -> Vec<usize> {
    let l = input.num_classes();
    (0..input.num_objects())
        .map(|i| {
            let mut votes = vec![0usize; l];
            for c in input.classifier_outputs() {
                votes[c[i] - 1] += 1;
            }
            let top = *votes.iter().max().unwrap();
            votes.iter().position(|&v| v == top).unwrap() + 1
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::synthetic::{generate_synthetic, SyntheticSpec};

    #[test]
    fn separated_blobs_give_accurate_classifiers() {
        let d = generate_synthetic(&SyntheticSpec {
            num_objects: 300,
            num_classes: 3,
            feature_dim: 3,
            cluster_separation: 10.0,
            seed: 2,
        })
        .unwrap();
        let run = run_base_methods(&d, Split::default(), 2).unwrap();
        assert_eq!(run.input.num_classifiers(), 3);
        assert_eq!(run.input.num_clusterers(), 2);
        assert_eq!(run.input.num_objects(), 60);
        let accs: Vec<f64> = run
            .input
            .classifier_outputs()
            .iter()
            .map(|c| c.iter().zip(run.truth()).filter(|(a, b)| a == b).count() as f64 / 60.0)
            .collect();
        assert!(accs[0] >= 0.95 && accs[1] >= 0.95, "{accs:?}");
        // One feature only separates one class from the other two here.
        assert!(accs[2] > 0.55, "{accs:?}");
    }

    #[test]
    fn split_sizes_and_errors() {
        let (a, b, c) = Split::default().indices(10, 0).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (6, 2, 2));
        let mut all: Vec<usize> = a.into_iter().chain(b).chain(c).collect();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        let no_test = Split {
            train: 0.8,
            validation: 0.2,
            test: 0.0,
        };
        assert!(no_test.indices(10, 0).is_err());
        let bad = Split {
            train: 0.5,
            validation: 0.2,
            test: 0.2,
        };
        assert!(bad.indices(10, 0).is_err());
    }

    #[test]
    fn majority_vote_ties_low() {
        let input = EnsembleInput::new(3, vec![vec![1, 2, 3], vec![2, 2, 1]], vec![vec![0, 0, 0]], None)
            .unwrap();
        assert_eq!(majority_vote(&input), vec![1, 2, 1]);
    }
}
