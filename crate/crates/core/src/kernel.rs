//! The bi-stochastic co-occurrence matrix `K^c` in dense or factored form.
//!
//! Row normalization followed by geometric-mean symmetrization keeps every
//! iterate of the square scaling in the form `D A^c D` with `D` diagonal.
//! Because `A^c = A^m (A^m)^T`, the factored form stores only `D` and the
//! group memberships: `K^c[i][j] = d_i d_j |groups(i) ∩ groups(j)|`. Every
//! quantity the solver needs is then `O(N (C1 + C2))` instead of `O(N^2)`.

use std::collections::HashMap;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

use crate::bistochastic::{kl_bistochastic_square, BistochasticMatrix, ScalingOptions};
use crate::ensemble::GroupCatalog;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum CooccurrenceKernel {
    Dense(DenseKernel),
    Factored(FactoredKernel),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseKernel {
    matrix: Array2<f64>,
    row_sums: Vec<f64>,
}

impl DenseKernel {
    pub fn new(matrix: Array2<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "K^c must be square, got {:?}",
                matrix.dim()
            )));
        }
        let row_sums = matrix.sum_axis(Axis(1)).to_vec();
        Ok(Self { matrix, row_sums })
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }
}

/// `K^c = D A^m (A^m)^T D`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactoredKernel {
    object_groups: Vec<Vec<usize>>,
    group_members: Vec<Vec<usize>>,
    scale: Vec<f64>,
    row_sums: Vec<f64>,
}

/// Convergence record of the factored square scaling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingReport {
    pub residual: f64,
    pub sweeps: usize,
    pub converged: bool,
}

impl FactoredKernel {
    /// Runs the square bi-stochastic iteration on `A^c` without forming it.
    ///
    /// Produces the same iterates as [`kl_bistochastic_square`] applied to
    /// the dense co-occurrence matrix, including the Frobenius stopping rule.
    pub fn from_catalog(
        catalog: &GroupCatalog,
        opts: ScalingOptions,
    ) -> Result<(Self, ScalingReport)> {
        if !(opts.tol > 0.0) || opts.max_sweeps == 0 {
            return Err(Error::InvalidParams(format!(
                "scaling needs tol > 0 and max_sweeps >= 1, got {} / {}",
                opts.tol, opts.max_sweeps
            )));
        }
        let object_groups = catalog.object_groups().to_vec();
        let group_members: Vec<Vec<usize>> =
            catalog.groups().iter().map(|g| g.members.clone()).collect();
        if let Some(i) = object_groups.iter().position(|g| g.is_empty()) {
            return Err(Error::ZeroRow(i));
        }
        let pairs = PairIndex::new(&object_groups);

        let n = object_groups.len();
        let mut scale = vec![1.0; n];
        let mut residual = f64::INFINITY;
        let mut sweeps = 0;
        let mut rho = vec![0.0; n];
        while sweeps < opts.max_sweeps {
            sweeps += 1;
            let totals = group_totals(&group_members, &scale);
            for i in 0..n {
                let s = scale[i] * object_groups[i].iter().map(|&g| totals[g]).sum::<f64>();
                rho[i] = 1.0 / s.sqrt();
            }
            residual = pairs.step_distance(&scale, &rho);
            for (d, r) in scale.iter_mut().zip(&rho) {
                *d *= r;
            }
            if residual <= opts.tol {
                break;
            }
        }

        let totals = group_totals(&group_members, &scale);
        let row_sums = (0..n)
            .map(|i| scale[i] * object_groups[i].iter().map(|&g| totals[g]).sum::<f64>())
            .collect();
        Ok((
            Self {
                object_groups,
                group_members,
                scale,
                row_sums,
            },
            ScalingReport {
                residual,
                sweeps,
                converged: residual <= opts.tol,
            },
        ))
    }

    pub fn scale(&self) -> &[f64] {
        &self.scale
    }
}

fn group_totals(group_members: &[Vec<usize>], scale: &[f64]) -> Vec<f64> {
    group_members
        .iter()
        .map(|m| m.iter().map(|&j| scale[j]).sum())
        .collect()
}

/// Index over unordered pairs of groups that share at least one object.
///
/// `sum_ij A^c[i][j]^2 u_i v_j = sum_{g,h} P_gh(u) P_gh(v)` where
/// `P_gh(u) = sum of u_i over objects in both g and h`, which makes the
/// Frobenius distance between two `D A^c D` iterates computable from the
/// memberships alone.
struct PairIndex {
    /// Pair ids per object.
    object_pairs: Vec<Vec<usize>>,
    /// 1 for diagonal pairs (g, g), 2 for off-diagonal ones.
    multiplicity: Vec<f64>,
}

impl PairIndex {
    fn new(object_groups: &[Vec<usize>]) -> Self {
        let mut ids: HashMap<(usize, usize), usize> = HashMap::new();
        let mut multiplicity = Vec::new();
        let object_pairs = object_groups
            .iter()
            .map(|groups| {
                let mut own = Vec::with_capacity(groups.len() * (groups.len() + 1) / 2);
                for (a, &g) in groups.iter().enumerate() {
                    for &h in &groups[a..] {
                        let key = (g.min(h), g.max(h));
                        let next = ids.len();
                        let id = *ids.entry(key).or_insert_with(|| {
                            multiplicity.push(if g == h { 1.0 } else { 2.0 });
                            next
                        });
                        own.push(id);
                    }
                }
                own
            })
            .collect();
        Self {
            object_pairs,
            multiplicity,
        }
    }

    /// `sqrt(sum_ij A_ij^2 (d_i rho_i d_j rho_j - d_i d_j)^2)`.
    ///
    /// Expanded in `e = rho - 1` so that no large terms cancel near
    /// convergence.
    fn step_distance(&self, scale: &[f64], rho: &[f64]) -> f64 {
        let p = self.multiplicity.len();
        // Projections of w, w e, w e^2 with w = d^2.
        let mut pw = vec![0.0; p];
        let mut pwe = vec![0.0; p];
        let mut pwe2 = vec![0.0; p];
        for (i, pairs) in self.object_pairs.iter().enumerate() {
            let w = scale[i] * scale[i];
            let e = rho[i] - 1.0;
            for &id in pairs {
                pw[id] += w;
                pwe[id] += w * e;
                pwe2[id] += w * e * e;
            }
        }
        let mut total = 0.0;
        for id in 0..p {
            let q = 2.0 * pwe2[id] * pw[id]
                + pwe2[id] * pwe2[id]
                + 2.0 * pwe[id] * pwe[id]
                + 4.0 * pwe2[id] * pwe[id];
            total += self.multiplicity[id] * q;
        }
        total.max(0.0).sqrt()
    }
}

/// Per-sweep cache used by the solver's object update.
#[derive(Debug, Clone)]
pub struct SweepCache {
    /// For the factored kernel: `S_g = sum_{j in g} d_j F_j`, `G x l`.
    group_sums: Option<Array2<f64>>,
}

impl CooccurrenceKernel {
    pub fn dense(matrix: Array2<f64>) -> Result<Self> {
        DenseKernel::new(matrix).map(Self::Dense)
    }

    /// Dense bi-stochastic projection of the given co-occurrence matrix.
    pub fn from_bistochastic(k: &BistochasticMatrix) -> Result<Self> {
        Self::dense(k.matrix.clone())
    }

    /// Dense reference route: builds `A^c` and runs the square scaling on it.
    pub fn dense_from_catalog(
        catalog: &GroupCatalog,
        opts: ScalingOptions,
    ) -> Result<(Self, ScalingReport)> {
        let n = catalog.num_objects();
        let mut ac = Array2::<f64>::zeros((n, n));
        for group in catalog.groups() {
            for &i in &group.members {
                for &j in &group.members {
                    ac[[i, j]] += 1.0;
                }
            }
        }
        let k = kl_bistochastic_square(&ac, opts)?;
        let report = ScalingReport {
            residual: k.residual,
            sweeps: k.sweeps,
            converged: k.converged,
        };
        Ok((Self::dense(k.matrix)?, report))
    }

    pub fn len(&self) -> usize {
        match self {
            Self::Dense(k) => k.matrix.nrows(),
            Self::Factored(k) => k.scale.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn diagonal(&self, i: usize) -> f64 {
        match self {
            Self::Dense(k) => k.matrix[[i, i]],
            Self::Factored(k) => k.scale[i] * k.scale[i] * k.object_groups[i].len() as f64,
        }
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        match self {
            Self::Dense(k) => k.row_sums[i],
            Self::Factored(k) => k.row_sums[i],
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        match self {
            Self::Dense(k) => k.matrix.clone(),
            Self::Factored(k) => {
                let n = k.scale.len();
                let mut out = Array2::zeros((n, n));
                for members in &k.group_members {
                    for &i in members {
                        for &j in members {
                            out[[i, j]] += k.scale[i] * k.scale[j];
                        }
                    }
                }
                out
            }
        }
    }

    /// `sum_i sum_j K[i][j] |F_i - F_j|^2`.
    pub fn smoothness(&self, f: ArrayView2<f64>) -> f64 {
        match self {
            Self::Dense(k) => {
                let n = f.nrows();
                let mut total = 0.0;
                for i in 0..n {
                    let fi = f.row(i);
                    for j in 0..n {
                        let kij = k.matrix[[i, j]];
                        if kij != 0.0 && i != j {
                            total += kij * sq_dist(fi, f.row(j));
                        }
                    }
                }
                total
            }
            Self::Factored(k) => {
                // Within a group with weights w: sum_{i,j} w_i w_j |F_i - F_j|^2
                // = 2 W sum_i w_i |F_i - mean_w|^2.
                let l = f.ncols();
                let mut mean = vec![0.0; l];
                let mut total = 0.0;
                for members in &k.group_members {
                    let w_total: f64 = members.iter().map(|&i| k.scale[i]).sum();
                    mean.iter_mut().for_each(|m| *m = 0.0);
                    for &i in members {
                        for (m, x) in mean.iter_mut().zip(f.row(i)) {
                            *m += k.scale[i] * x;
                        }
                    }
                    mean.iter_mut().for_each(|m| *m /= w_total);
                    let spread: f64 = members
                        .iter()
                        .map(|&i| {
                            k.scale[i]
                                * f.row(i)
                                    .iter()
                                    .zip(&mean)
                                    .map(|(x, m)| (x - m) * (x - m))
                                    .sum::<f64>()
                        })
                        .sum();
                    total += 2.0 * w_total * spread;
                }
                total
            }
        }
    }

    pub fn sweep_cache(&self, f: ArrayView2<f64>) -> SweepCache {
        match self {
            Self::Dense(_) => SweepCache { group_sums: None },
            Self::Factored(k) => {
                let mut sums = Array2::zeros((k.group_members.len(), f.ncols()));
                for (g, members) in k.group_members.iter().enumerate() {
                    let mut row = sums.row_mut(g);
                    for &j in members {
                        row.scaled_add(k.scale[j], &f.row(j));
                    }
                }
                SweepCache {
                    group_sums: Some(sums),
                }
            }
        }
    }

    /// Writes `sum_{j != i} K[i][j] F_j` into `out`, reading rows of `f`
    /// (dense) or the cache (factored) as they stand.
    pub fn neighbour_sum(
        &self,
        cache: &SweepCache,
        f: ArrayView2<f64>,
        i: usize,
        out: &mut [f64],
    ) {
        out.iter_mut().for_each(|x| *x = 0.0);
        match self {
            Self::Dense(k) => {
                for (j, &kij) in k.matrix.row(i).iter().enumerate() {
                    if j != i && kij != 0.0 {
                        for (o, x) in out.iter_mut().zip(f.row(j)) {
                            *o += kij * x;
                        }
                    }
                }
            }
            Self::Factored(k) => {
                let sums = cache.group_sums.as_ref().expect("factored cache");
                for &g in &k.object_groups[i] {
                    for (o, s) in out.iter_mut().zip(sums.row(g)) {
                        *o += s;
                    }
                }
                let di = k.scale[i];
                let kii = self.diagonal(i);
                for (o, x) in out.iter_mut().zip(f.row(i)) {
                    *o = di * *o - kii * x;
                }
            }
        }
    }

    /// Records that row `i` changed from `old` to `new`.
    pub fn commit(
        &self,
        cache: &mut SweepCache,
        i: usize,
        old: ArrayView1<f64>,
        new: ArrayView1<f64>,
    ) {
        if let (Self::Factored(k), Some(sums)) = (self, cache.group_sums.as_mut()) {
            let di = k.scale[i];
            for &g in &k.object_groups[i] {
                for ((s, n), o) in sums.row_mut(g).iter_mut().zip(new).zip(old) {
                    *s += di * (n - o);
                }
            }
        }
    }
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{build_group_catalog, EnsembleInput};
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_catalog(seed: u64) -> GroupCatalog {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(2..25);
        let l = rng.gen_range(2..5);
        let c1 = rng.gen_range(1..4);
        let c2 = rng.gen_range(0..4);
        let classifiers = (0..c1)
            .map(|_| (0..n).map(|_| rng.gen_range(1..=l)).collect())
            .collect();
        let clusterings = (0..c2)
            .map(|_| {
                let k = rng.gen_range(1..6);
                (0..n).map(|_| rng.gen_range(0..k)).collect()
            })
            .collect();
        let input = EnsembleInput::new(l, classifiers, clusterings, None).unwrap();
        build_group_catalog(&input).unwrap()
    }

    #[test]
    fn factored_route_matches_dense_route() {
        let opts = ScalingOptions {
            tol: 1e-9,
            max_sweeps: 5000,
        };
        for seed in 0..30 {
            let cat = random_catalog(seed);
            let (dense, dr) = CooccurrenceKernel::dense_from_catalog(&cat, opts).unwrap();
            let (fact, fr) = FactoredKernel::from_catalog(&cat, opts).unwrap();
            let fact = CooccurrenceKernel::Factored(fact);
            assert_eq!(dr.sweeps, fr.sweeps, "seed {seed}");
            assert_abs_diff_eq!(dr.residual, fr.residual, epsilon = 1e-10);
            let a = dense.to_dense();
            let b = fact.to_dense();
            for (x, y) in a.iter().zip(b.iter()) {
                assert_abs_diff_eq!(x, y, epsilon = 1e-12);
            }
            for i in 0..cat.num_objects() {
                assert_abs_diff_eq!(dense.row_sum(i), fact.row_sum(i), epsilon = 1e-12);
                assert_abs_diff_eq!(dense.diagonal(i), fact.diagonal(i), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn factored_smoothness_and_neighbour_sums_match_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for seed in 0..10 {
            let cat = random_catalog(100 + seed);
            let (fact, _) = FactoredKernel::from_catalog(&cat, ScalingOptions::default()).unwrap();
            let fact = CooccurrenceKernel::Factored(fact);
            let dense = CooccurrenceKernel::dense(fact.to_dense()).unwrap();
            let n = cat.num_objects();
            let f = Array2::from_shape_fn((n, 3), |_| rng.gen::<f64>());
            assert_abs_diff_eq!(
                dense.smoothness(f.view()),
                fact.smoothness(f.view()),
                epsilon = 1e-10
            );
            let dc = dense.sweep_cache(f.view());
            let fc = fact.sweep_cache(f.view());
            let mut a = vec![0.0; 3];
            let mut b = vec![0.0; 3];
            for i in 0..n {
                dense.neighbour_sum(&dc, f.view(), i, &mut a);
                fact.neighbour_sum(&fc, f.view(), i, &mut b);
                for (x, y) in a.iter().zip(&b) {
                    assert_abs_diff_eq!(x, y, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn commit_keeps_cache_in_sync() {
        let cat = random_catalog(3);
        let (fact, _) = FactoredKernel::from_catalog(&cat, ScalingOptions::default()).unwrap();
        let k = CooccurrenceKernel::Factored(fact);
        let n = cat.num_objects();
        let mut f = Array2::from_elem((n, 2), 0.5);
        let mut cache = k.sweep_cache(f.view());
        let old = f.row(0).to_owned();
        f.row_mut(0).assign(&array![0.9, 0.1]);
        k.commit(&mut cache, 0, old.view(), f.row(0));
        let fresh = k.sweep_cache(f.view());
        for (x, y) in cache
            .group_sums
            .unwrap()
            .iter()
            .zip(fresh.group_sums.unwrap().iter())
        {
            assert_abs_diff_eq!(x, y, epsilon = 1e-14);
        }
    }
}
