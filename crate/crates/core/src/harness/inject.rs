//! Noise, imbalance and ablation transforms. All of them return new values.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::synthetic::Dataset;
use crate::ensemble::EnsembleInput;
use crate::error::{Error, Result};
use crate::objective::ObjectiveParams;

/// Weight given to `alpha` when the first component is dropped; the
/// objective needs `alpha > 0`.
pub const ABLATED_ALPHA: f64 = 1e-6;

/// Appends `count` classifiers that label every object uniformly at random.
pub fn inject_random_classifier(input: &EnsembleInput, count: usize, seed: u64) -> Result<EnsembleInput> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, l) = (input.num_objects(), input.num_classes());
    let mut out = input.clone();
    for _ in 0..count {
        let labels = (0..n).map(|_| rng.gen_range(1..=l)).collect();
        out = out.with_classifier(labels)?;
    }
    Ok(out)
}

/// A clustering into `c ~ U[1, N]` clusters with uniform assignment; every
/// empty cluster then takes one object from the currently largest cluster.
pub fn random_clustering(n: usize, rng: &mut ChaCha8Rng) -> Vec<i64> {
    let c = rng.gen_range(1..=n);
    let mut assign: Vec<usize> = (0..n).map(|_| rng.gen_range(0..c)).collect();
    let mut members = vec![Vec::new(); c];
    for (i, &a) in assign.iter().enumerate() {
        members[a].push(i);
    }
    for k in 0..c {
        if members[k].is_empty() {
            // Largest cluster, lowest id on ties; it has at least two members
            // because c <= n.
            let big = (0..c)
                .max_by(|&a, &b| members[a].len().cmp(&members[b].len()).then(b.cmp(&a)))
                .unwrap();
            let obj = members[big].pop().unwrap();
            assign[obj] = k;
            members[k].push(obj);
        }
    }
    assign.into_iter().map(|a| a as i64).collect()
}

pub fn inject_random_clusterer(input: &EnsembleInput, count: usize, seed: u64) -> Result<EnsembleInput> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = input.clone();
    for _ in 0..count {
        let ids = random_clustering(input.num_objects(), &mut rng);
        out = out.with_clustering(&ids)?;
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct Imbalanced {
    pub data: Dataset,
    /// 1-based class that lost objects.
    pub class: usize,
    pub removed: usize,
}

/// Removes `floor(x% * size)` random objects of one uniformly chosen class.
pub fn inject_imbalance(data: &Dataset, percent: f64, seed: u64) -> Result<Imbalanced> {
    if !(0.0..=100.0).contains(&percent) {
        return Err(Error::InvalidParams(format!(
            "imbalance percentage must lie in [0, 100], got {percent}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let class = rng.gen_range(1..=data.num_classes);
    let mut members: Vec<usize> = (0..data.len()).filter(|&i| data.labels[i] == class).collect();
    // The slack keeps products like 35% of 20 from flooring to 6.
    let removed = (percent * members.len() as f64 / 100.0 + 1e-9).floor() as usize;
    if removed >= members.len() && !members.is_empty() {
        return Err(Error::InvalidParams(format!(
            "removing {percent}% of class {class} ({} objects) would empty it",
            members.len()
        )));
    }
    members.shuffle(&mut rng);
    let mut drop = vec![false; data.len()];
    for &i in &members[..removed] {
        drop[i] = true;
    }
    let keep: Vec<usize> = (0..data.len()).filter(|&i| !drop[i]).collect();
    Ok(Imbalanced {
        data: data.subset(&keep),
        class,
        removed,
    })
}

/// Zeroes component `k` (1..=4) and rescales the remaining weights so the
/// configured additive constraint holds again. Component 1 is set to
/// [`ABLATED_ALPHA`] instead of zero.
pub fn ablate_component(params: &ObjectiveParams, k: usize) -> Result<ObjectiveParams> {
    if !(1..=4).contains(&k) {
        return Err(Error::InvalidParams(format!("component index {k} outside 1..=4")));
    }
    let coef = params.constraint.coefficients();
    let mut w = params.weights();
    w[k - 1] = if k == 1 { ABLATED_ALPHA } else { 0.0 };
    let rest: f64 = (0..4).filter(|&i| i != k - 1).map(|i| coef[i] * w[i]).sum();
    if !(rest > 0.0) {
        return Err(Error::InvalidParams(format!(
            "dropping component {k} from {:?} leaves nothing to rescale",
            params.weights()
        )));
    }
    let scale = (1.0 - coef[k - 1] * w[k - 1]) / rest;
    for (i, v) in w.iter_mut().enumerate() {
        if i != k - 1 {
            *v *= scale;
        }
    }
    ObjectiveParams::with_constraint(w[0], w[1], w[2], w[3], params.constraint)
}
