//! KL-optimal bi-stochastic approximation of nonnegative matrices.
//!
//! The square routine is the row-normalize / geometric-mean symmetrize
//! iteration; the rectangular routine alternates column and row scaling
//! towards prescribed marginals. Both stop when the Frobenius distance
//! between successive iterates drops to `tol`.

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScalingOptions {
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for ScalingOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_sweeps: 1000,
        }
    }
}

impl ScalingOptions {
    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_sweeps == 0 {
            return Err(Error::InvalidParams(format!(
                "scaling needs tol > 0 and max_sweeps >= 1, got {} / {}",
                self.tol, self.max_sweeps
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BistochasticMatrix {
    pub matrix: Array2<f64>,
    /// Frobenius distance between the last two iterates.
    pub residual: f64,
    pub sweeps: usize,
    pub converged: bool,
}

/// Column mass targets for [`scale_rectangular`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnTargets {
    /// Every column sums to `N / G`.
    Uniform,
    /// Column `j` sums to `N * c_j / sum(c)` where `c` are the input's
    /// column sums, i.e. the input's column mass distribution is kept.
    Proportional,
}

fn check_nonnegative(a: &Array2<f64>) -> Result<()> {
    for ((i, j), &v) in a.indexed_iter() {
        if !(v >= 0.0) {
            return Err(Error::NegativeEntry(i, j));
        }
    }
    Ok(())
}

fn check_symmetric(a: &Array2<f64>) -> Result<()> {
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let gap = (a[[i, j]] - a[[j, i]]).abs();
            if gap > 1e-12 * scale {
                return Err(Error::NotSymmetric { i, j, gap });
            }
        }
    }
    Ok(())
}

fn frobenius_distance(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Bi-stochastic approximation of a symmetric nonnegative square matrix.
pub fn kl_bistochastic_square(a: &Array2<f64>, opts: ScalingOptions) -> Result<BistochasticMatrix> {
    opts.validate()?;
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "expected a square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    check_nonnegative(a)?;
    check_symmetric(a)?;
    if let Some(i) = a.sum_axis(Axis(1)).iter().position(|&s| s <= 0.0) {
        return Err(Error::ZeroRow(i));
    }

    let mut current = a.clone();
    let mut residual = f64::INFINITY;
    let mut sweeps = 0;
    while sweeps < opts.max_sweeps {
        sweeps += 1;
        let mut next = current.clone();
        for mut row in next.rows_mut() {
            let d = row.sum();
            row /= d;
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let g = (next[[i, j]] * next[[j, i]]).sqrt();
                next[[i, j]] = g;
                next[[j, i]] = g;
            }
        }
        residual = frobenius_distance(&next, &current);
        current = next;
        if residual <= opts.tol {
            break;
        }
    }
    Ok(BistochasticMatrix {
        matrix: current,
        residual,
        sweeps,
        converged: residual <= opts.tol,
    })
}

/// Rectangular scaling with rows driven to 1 and columns to `N / G`.
pub fn kl_bistochastic_rectangular(
    a: &Array2<f64>,
    opts: ScalingOptions,
) -> Result<BistochasticMatrix> {
    scale_rectangular(a, ColumnTargets::Uniform, opts)
}

/// Alternating column/row scaling of an `N x G` matrix towards unit row
/// sums and the requested column sums.
///
/// Each sweep scales columns first and rows last, so the returned matrix is
/// exactly row-stochastic even when the marginals are infeasible for the
/// support pattern and the iteration stops at `max_sweeps`
/// (`converged == false`).
pub fn scale_rectangular(
    a: &Array2<f64>,
    targets: ColumnTargets,
    opts: ScalingOptions,
) -> Result<BistochasticMatrix> {
    opts.validate()?;
    check_nonnegative(a)?;
    let (n, g) = a.dim();
    if n == 0 || g == 0 {
        return Err(Error::DimensionMismatch(format!("empty {n}x{g} matrix")));
    }
    let row_sums = a.sum_axis(Axis(1));
    if let Some(i) = row_sums.iter().position(|&s| s <= 0.0) {
        return Err(Error::ZeroRow(i));
    }
    let col_sums = a.sum_axis(Axis(0));
    if let Some(j) = col_sums.iter().position(|&s| s <= 0.0) {
        return Err(Error::ZeroColumn(j));
    }
    let col_targets: Vec<f64> = match targets {
        ColumnTargets::Uniform => vec![n as f64 / g as f64; g],
        ColumnTargets::Proportional => {
            let total = col_sums.sum();
            col_sums.iter().map(|c| n as f64 * c / total).collect()
        }
    };

    let mut current = a.clone();
    let mut residual = f64::INFINITY;
    let mut sweeps = 0;
    while sweeps < opts.max_sweeps {
        sweeps += 1;
        let mut next = current.clone();
        let sums = next.sum_axis(Axis(0));
        for (mut col, (&s, &t)) in next
            .columns_mut()
            .into_iter()
            .zip(sums.iter().zip(&col_targets))
        {
            col *= t / s;
        }
        for mut row in next.rows_mut() {
            let s = row.sum();
            row /= s;
        }
        residual = frobenius_distance(&next, &current);
        current = next;
        if residual <= opts.tol {
            break;
        }
    }
    Ok(BistochasticMatrix {
        matrix: current,
        residual,
        sweeps,
        converged: residual <= opts.tol,
    })
}

/// Divides every column by its sum.
pub fn column_normalize(a: &Array2<f64>) -> Result<Array2<f64>> {
    check_nonnegative(a)?;
    let sums = a.sum_axis(Axis(0));
    if let Some(j) = sums.iter().position(|&s| s <= 0.0) {
        return Err(Error::ZeroColumn(j));
    }
    Ok(a / &sums.insert_axis(Axis(0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn tight() -> ScalingOptions {
        ScalingOptions {
            tol: 1e-14,
            max_sweeps: 10_000,
        }
    }

    #[test]
    fn identity_is_a_one_sweep_fixed_point() {
        let eye = Array2::<f64>::eye(4);
        let k = kl_bistochastic_square(&eye, ScalingOptions::default()).unwrap();
        assert_eq!(k.matrix, eye);
        assert_eq!(k.sweeps, 1);
        assert!(k.converged);
    }

    #[test]
    fn constant_matrix_normalizes_to_uniform() {
        let k = kl_bistochastic_square(&Array2::ones((2, 2)), ScalingOptions::default()).unwrap();
        assert_eq!(k.matrix, array![[0.5, 0.5], [0.5, 0.5]]);
    }

    #[test]
    fn two_by_two_cooccurrence_matches_long_run() {
        let a = array![[2.0, 1.0], [1.0, 2.0]];
        let k = kl_bistochastic_square(&a, ScalingOptions::default()).unwrap();
        let reference = kl_bistochastic_square(
            &a,
            ScalingOptions {
                tol: 1e-300,
                max_sweeps: 10_000,
            },
        )
        .unwrap();
        for row in k.matrix.rows() {
            assert_abs_diff_eq!(row.sum(), 1.0, epsilon = 1e-6);
        }
        assert_eq!(k.matrix[[0, 1]], k.matrix[[1, 0]]);
        for (x, y) in k.matrix.iter().zip(reference.matrix.iter()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-6);
        }
        // Symmetric with equal row sums already: the limit is A / 3.
        assert_abs_diff_eq!(reference.matrix[[0, 0]], 2.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn square_rejects_bad_inputs() {
        assert!(matches!(
            kl_bistochastic_square(&array![[1.0, 0.0], [0.0, 0.0]], ScalingOptions::default()),
            Err(Error::ZeroRow(1))
        ));
        assert!(matches!(
            kl_bistochastic_square(&array![[1.0, 2.0], [0.5, 1.0]], ScalingOptions::default()),
            Err(Error::NotSymmetric { .. })
        ));
        assert!(kl_bistochastic_square(&Array2::ones((2, 3)), ScalingOptions::default()).is_err());
    }

    #[test]
    fn ones_column_is_unchanged() {
        let a = Array2::<f64>::ones((5, 1));
        let k = kl_bistochastic_rectangular(&a, ScalingOptions::default()).unwrap();
        assert_eq!(k.matrix, a);
        assert!(k.converged);
    }

    #[test]
    fn rectangular_two_object_example() {
        let a = array![[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]];
        let k = kl_bistochastic_rectangular(&a, ScalingOptions::default()).unwrap();
        let reference = kl_bistochastic_rectangular(&a, tight()).unwrap();
        for s in k.matrix.sum_axis(Axis(1)) {
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-6);
        }
        for s in k.matrix.sum_axis(Axis(0)) {
            assert_abs_diff_eq!(s, 2.0 / 3.0, epsilon = 1e-6);
        }
        for (x, y) in k.matrix.iter().zip(reference.matrix.iter()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-6);
        }
        assert_abs_diff_eq!(reference.matrix[[0, 0]], 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(reference.matrix[[0, 2]], 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn block_diagonal_support_is_preserved() {
        let a = array![
            [1.0, 2.0, 0.0, 0.0],
            [3.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 1.0],
            [0.0, 0.0, 2.0, 5.0]
        ];
        let k = kl_bistochastic_rectangular(&a, ScalingOptions::default()).unwrap();
        for ((i, j), &v) in k.matrix.indexed_iter() {
            if a[[i, j]] == 0.0 {
                assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn infeasible_marginals_still_give_row_stochastic_output() {
        // Singleton group 0 would need mass 2 > 1.
        let a = array![[1.0, 1.0], [0.0, 1.0], [0.0, 1.0], [0.0, 1.0]];
        let k = kl_bistochastic_rectangular(
            &a,
            ScalingOptions {
                tol: 1e-12,
                max_sweeps: 200,
            },
        )
        .unwrap();
        for s in k.matrix.sum_axis(Axis(1)) {
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn proportional_targets_keep_membership_shape() {
        // Every row has the same count, so A / rowsum is already the answer.
        let a = array![[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]];
        let k = scale_rectangular(&a, ColumnTargets::Proportional, ScalingOptions::default())
            .unwrap();
        assert_eq!(k.matrix, &a / 2.0);
        // The first sweep lands on it, the second sees no change.
        assert_eq!(k.sweeps, 2);
        assert!(k.converged);
    }

    #[test]
    fn rectangular_rejects_empty_column() {
        assert!(matches!(
            kl_bistochastic_rectangular(&array![[1.0, 0.0], [1.0, 0.0]], ScalingOptions::default()),
            Err(Error::ZeroColumn(1))
        ));
    }

    #[test]
    fn column_normalize_examples() {
        let a = array![[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]];
        assert_eq!(
            column_normalize(&a).unwrap(),
            array![[1.0, 0.0, 0.5], [0.0, 1.0, 0.5]]
        );
        let four = Array2::<f64>::ones((4, 1));
        assert_eq!(column_normalize(&four).unwrap(), Array2::from_elem((4, 1), 0.25));
        assert!(matches!(
            column_normalize(&array![[1.0, 0.0]]),
            Err(Error::ZeroColumn(1))
        ));
    }
}
