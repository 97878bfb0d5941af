//! The four-component consensus objective.
//!
//! ```text
//! P = a/2 * sum_ij Km_ij |Fo_i - Fg_j|^2      (J1, object–group agreement)
//!   + b/2 * sum_ij Kc_ij |Fo_i - Fo_j|^2      (J2, co-occurrence)
//!   + c   * sum_i  |Fo_i - Yo_i|^2            (J3, classifier consensus)
//!   + d   * sum_j  |Fg_j - Yg_j|^2            (J4, group vote prior)
//! ```

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::ConsensusMatrices;

const WEIGHT_TOL: f64 = 1e-12;

/// Additive constraint on the four weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightConstraint {
    /// `a + b + c + d = 1`; every bundled profile satisfies it.
    #[default]
    UnitSum,
    /// `a/2 + b/2 + c + d = 1`.
    HalfWeighted,
}

impl WeightConstraint {
    pub fn total(&self, w: [f64; 4]) -> f64 {
        match self {
            Self::UnitSum => w.iter().sum(),
            Self::HalfWeighted => w[0] / 2.0 + w[1] / 2.0 + w[2] + w[3],
        }
    }

    /// Coefficient of each weight in [`Self::total`].
    pub fn coefficients(&self) -> [f64; 4] {
        match self {
            Self::UnitSum => [1.0; 4],
            Self::HalfWeighted => [0.5, 0.5, 1.0, 1.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    #[serde(default)]
    pub constraint: WeightConstraint,
}

impl Default for ObjectiveParams {
    fn default() -> Self {
        Self {
            alpha: 0.25,
            beta: 0.35,
            gamma: 0.35,
            delta: 0.05,
            constraint: WeightConstraint::UnitSum,
        }
    }
}

impl ObjectiveParams {
    pub fn new(alpha: f64, beta: f64, gamma: f64, delta: f64) -> Result<Self> {
        Self::with_constraint(alpha, beta, gamma, delta, WeightConstraint::UnitSum)
    }

    pub fn with_constraint(
        alpha: f64,
        beta: f64,
        gamma: f64,
        delta: f64,
        constraint: WeightConstraint,
    ) -> Result<Self> {
        let p = Self {
            alpha,
            beta,
            gamma,
            delta,
            constraint,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn weights(&self) -> [f64; 4] {
        [self.alpha, self.beta, self.gamma, self.delta]
    }

    pub fn validate(&self) -> Result<()> {
        let w = self.weights();
        if w.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParams(format!("non-finite weight in {w:?}")));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidParams(format!(
                "alpha must lie in (0, 1], got {}",
                self.alpha
            )));
        }
        for (name, v) in [("beta", self.beta), ("gamma", self.gamma), ("delta", self.delta)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParams(format!(
                    "{name} must lie in [0, 1], got {v}"
                )));
            }
        }
        let total = self.constraint.total(w);
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::InvalidParams(format!(
                "weights {w:?} sum to {total} under {:?}, expected 1",
                self.constraint
            )));
        }
        Ok(())
    }
}

/// Row-stochastic class distributions for objects (`N x l`) and groups
/// (`G x l`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDistributions {
    pub objects: Array2<f64>,
    pub groups: Array2<f64>,
}

impl ClassDistributions {
    /// Largest deviation of any row sum from 1, or infinity if an entry is
    /// negative.
    pub fn stochastic_violation(&self) -> f64 {
        row_stochastic_violation(self.objects.view()).max(row_stochastic_violation(self.groups.view()))
    }
}

pub fn row_stochastic_violation(m: ArrayView2<f64>) -> f64 {
    let mut worst = 0.0f64;
    for row in m.rows() {
        if row.iter().any(|&x| !(x >= 0.0)) {
            return f64::INFINITY;
        }
        worst = worst.max((row.sum() - 1.0).abs());
    }
    worst
}

/// `I - K^c`.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianMatrix(Array2<f64>);

impl LaplacianMatrix {
    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }
}

pub fn laplacian(kc: &Array2<f64>) -> Result<LaplacianMatrix> {
    let n = kc.nrows();
    if kc.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "Laplacian needs a square matrix, got {:?}",
            kc.dim()
        )));
    }
    Ok(LaplacianMatrix(Array2::eye(n) - kc))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Components {
    pub j1: f64,
    pub j2: f64,
    pub j3: f64,
    pub j4: f64,
}

impl Components {
    pub fn weighted(&self, p: &ObjectiveParams) -> f64 {
        p.alpha / 2.0 * self.j1 + p.beta / 2.0 * self.j2 + p.gamma * self.j3 + p.delta * self.j4
    }
}

fn check_dims(f: &ClassDistributions, m: &ConsensusMatrices) -> Result<()> {
    if f.objects.dim() != m.yo.dim() || f.groups.dim() != m.yg.dim() {
        return Err(Error::DimensionMismatch(format!(
            "F^o {:?} / F^g {:?} against Y^o {:?} / Y^g {:?}",
            f.objects.dim(),
            f.groups.dim(),
            m.yo.dim(),
            m.yg.dim()
        )));
    }
    Ok(())
}

fn sq_diff_sum(a: ArrayView2<f64>, b: ArrayView2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn eval_components(f: &ClassDistributions, m: &ConsensusMatrices) -> Result<Components> {
    check_dims(f, m)?;
    let mut j1 = 0.0;
    for (i, km_row) in m.km.rows().into_iter().enumerate() {
        let fo = f.objects.row(i);
        for (j, &w) in km_row.iter().enumerate() {
            if w != 0.0 {
                let d: f64 = fo
                    .iter()
                    .zip(f.groups.row(j))
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum();
                j1 += w * d;
            }
        }
    }
    Ok(Components {
        j1,
        j2: m.kc.smoothness(f.objects.view()),
        j3: sq_diff_sum(f.objects.view(), m.yo.view()),
        j4: sq_diff_sum(f.groups.view(), m.yg.view()),
    })
}

pub fn eval_objective(
    f: &ClassDistributions,
    params: &ObjectiveParams,
    m: &ConsensusMatrices,
) -> Result<f64> {
    params.validate()?;
    Ok(eval_components(f, m)?.weighted(params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::CooccurrenceKernel;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn matrices(km: Array2<f64>, kc: Array2<f64>, yo: Array2<f64>, yg: Array2<f64>) -> ConsensusMatrices {
        ConsensusMatrices::new(km, CooccurrenceKernel::dense(kc).unwrap(), yo, yg).unwrap()
    }

    #[test]
    fn default_params_validate_and_halved_form_rejects_them() {
        assert!(ObjectiveParams::default().validate().is_ok());
        assert!(ObjectiveParams::with_constraint(
            0.25,
            0.35,
            0.35,
            0.05,
            WeightConstraint::HalfWeighted
        )
        .is_err());
        assert!(ObjectiveParams::with_constraint(0.5, 0.5, 0.3, 0.2, WeightConstraint::HalfWeighted)
            .is_ok());
    }

    #[test]
    fn alpha_must_be_positive() {
        assert!(ObjectiveParams::new(0.0, 0.5, 0.5, 0.0).is_err());
        assert!(ObjectiveParams::new(0.2, 0.5, 0.5, -0.2).is_err());
        assert!(ObjectiveParams::new(0.2, 0.2, 0.2, 0.2).is_err());
    }

    #[test]
    fn laplacian_examples() {
        let eye = Array2::<f64>::eye(3);
        assert_eq!(laplacian(&eye).unwrap().as_array(), &Array2::<f64>::zeros((3, 3)));
        let half = array![[0.5, 0.5], [0.5, 0.5]];
        assert_eq!(
            laplacian(&half).unwrap().as_array(),
            &array![[0.5, -0.5], [-0.5, 0.5]]
        );
        assert!(laplacian(&Array2::zeros((2, 3))).is_err());
    }

    #[test]
    fn zero_components_when_everything_agrees() {
        let row = array![[0.3, 0.7]];
        let fo = Array2::from_shape_fn((3, 2), |(_, c)| row[[0, c]]);
        let fg = Array2::from_shape_fn((2, 2), |(_, c)| row[[0, c]]);
        let m = matrices(
            Array2::from_elem((3, 2), 0.5),
            Array2::from_elem((3, 3), 1.0 / 3.0),
            fo.clone(),
            fg.clone(),
        );
        let c = eval_components(&ClassDistributions { objects: fo, groups: fg }, &m).unwrap();
        assert_eq!(c, Components::default());
    }

    #[test]
    fn single_pair_j1_is_two() {
        let m = matrices(array![[1.0]], array![[1.0]], array![[1.0, 0.0]], array![[0.0, 1.0]]);
        let f = ClassDistributions {
            objects: array![[1.0, 0.0]],
            groups: array![[0.0, 1.0]],
        };
        assert_abs_diff_eq!(eval_components(&f, &m).unwrap().j1, 2.0);
    }

    #[test]
    fn opposite_objects_j2_is_two() {
        let m = matrices(
            array![[1.0], [1.0]],
            array![[0.5, 0.5], [0.5, 0.5]],
            array![[1.0, 0.0], [0.0, 1.0]],
            array![[0.5, 0.5]],
        );
        let f = ClassDistributions {
            objects: array![[1.0, 0.0], [0.0, 1.0]],
            groups: array![[0.5, 0.5]],
        };
        assert_abs_diff_eq!(eval_components(&f, &m).unwrap().j2, 2.0);
    }

    #[test]
    fn weighted_sum_of_components() {
        let c = Components {
            j1: 2.0,
            j2: 2.0,
            j3: 1.0,
            j4: 1.0,
        };
        assert_abs_diff_eq!(c.weighted(&ObjectiveParams::default()), 1.0, epsilon = 1e-15);
        assert_eq!(Components::default().weighted(&ObjectiveParams::default()), 0.0);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let m = matrices(array![[1.0]], array![[1.0]], array![[1.0, 0.0]], array![[0.0, 1.0]]);
        let f = ClassDistributions {
            objects: array![[1.0, 0.0, 0.0]],
            groups: array![[0.0, 1.0]],
        };
        assert!(matches!(eval_components(&f, &m), Err(Error::DimensionMismatch(_))));
    }
}
