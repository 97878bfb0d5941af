//! Block coordinate descent over the group block `F^g` and the object block
//! `F^o`.
//!
//! With `F^o` fixed the objective separates over groups and each group row
//! has the closed-form minimizer
//!
//! ```text
//! Fg_j = (a * sum_i Km_ij Fo_i + 2d * Yg_j) / (a * sum_i Km_ij + 2d)
//! ```
//!
//! The object rows are coupled through `K^c`. The default sweep visits
//! objects in ascending order and sets each row to its exact minimizer
//! given the freshest values of all other rows:
//!
//! ```text
//! Fo_i = (a * sum_j Km_ij Fg_j + 2b * sum_{j!=i} Kc_ij Fo_j + 2c * Yo_i)
//!      / (a * sum_j Km_ij + 2b * sum_{j!=i} Kc_ij + 2c)
//! ```
//!
//! Both updates are convex combinations of stochastic rows, so feasibility
//! is preserved at every step without projection.

use std::io::Write;

use ndarray::{Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::fmt_num;
use crate::kernel::CooccurrenceKernel;
use crate::objective::{eval_components, ClassDistributions, Components, ObjectiveParams};
use crate::pipeline::{ConsensusMatrices, Mode};

/// Object-block update order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sweep {
    /// Rows in ascending order, each solved exactly against the freshest
    /// values of the others.
    #[default]
    GaussSeidel,
    /// All rows from the previous iterate, using
    /// `(... + b (2 sum_j Kc_ij Fo_j - Kc_ii Fo_i) ...) / (... + b (2 sum_j Kc_ij - Kc_ii) ...)`.
    Jacobi,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub params: ObjectiveParams,
    pub epsilon: f64,
    pub max_iterations: usize,
    pub mode: Mode,
    pub seed: u64,
    #[serde(default)]
    pub sweep: Sweep,
    /// Compare `|Fo(t) - Fo(t-1)|_F / sqrt(N l)` against epsilon instead of
    /// the raw Frobenius norm.
    #[serde(default)]
    pub normalized_delta: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            params: ObjectiveParams::default(),
            epsilon: 0.025,
            max_iterations: 500,
            mode: Mode::Iec3,
            seed: 0,
            sweep: Sweep::GaussSeidel,
            normalized_delta: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidParams(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidParams("max_iterations must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub components: Components,
    /// Objective after the group update of this iteration.
    pub objective_after_groups: f64,
    /// Objective after the object update of this iteration.
    pub objective: f64,
    /// Change of `F^o` over this iteration (as compared against epsilon).
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverResult {
    pub distributions: ClassDistributions,
    pub initial_objective: f64,
    pub trace: Vec<IterationRecord>,
    pub iterations_used: usize,
    pub converged: bool,
}

impl SolverResult {
    pub fn objective_trace(&self) -> Vec<f64> {
        self.trace.iter().map(|r| r.objective).collect()
    }

    /// Objective of the returned distributions: the last iterate when
    /// converged, otherwise the best one.
    pub fn final_objective(&self) -> f64 {
        match (self.converged, self.trace.last()) {
            (_, None) => self.initial_objective,
            (true, Some(r)) => r.objective,
            (false, Some(_)) => self.trace.iter().map(|r| r.objective).fold(f64::INFINITY, f64::min),
        }
    }

    pub fn labels(&self) -> Vec<usize> {
        predict_labels(&self.distributions.objects)
    }
}

/// Point in the iteration at which an observer is called.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Initial,
    AfterGroups(usize),
    AfterObjects(usize),
}

/// Random feasible start: each row is uniform on the probability simplex.
pub fn init_distributions(n: usize, g: usize, l: usize, seed: u64) -> ClassDistributions {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |rows: usize| {
        let mut m = Array2::from_shape_fn((rows, l), |_| {
            let x: f64 = Exp1.sample(&mut rng);
            x
        });
        for mut row in m.rows_mut() {
            let s = row.sum();
            if s > 0.0 {
                row /= s;
            } else {
                row.fill(1.0 / l as f64);
            }
        }
        m
    };
    let objects = draw(n);
    let groups = draw(g);
    ClassDistributions { objects, groups }
}

pub fn update_groups(
    fo: &Array2<f64>,
    km: &Array2<f64>,
    yg: &Array2<f64>,
    params: &ObjectiveParams,
) -> Result<Array2<f64>> {
    let (a, d) = (params.alpha, params.delta);
    let mut fg = km.t().dot(fo);
    let mass = km.sum_axis(Axis(0));
    for (j, mut row) in fg.rows_mut().into_iter().enumerate() {
        let den = a * mass[j] + 2.0 * d;
        if !(den > 0.0) {
            return Err(Error::Denominator {
                block: "group",
                index: j,
                value: den,
            });
        }
        row *= a;
        row.scaled_add(2.0 * d, &yg.row(j));
        row /= den;
    }
    Ok(fg)
}

pub fn update_objects(
    fg: &Array2<f64>,
    fo_current: &Array2<f64>,
    km: &Array2<f64>,
    kc: &CooccurrenceKernel,
    yo: &Array2<f64>,
    params: &ObjectiveParams,
    sweep: Sweep,
) -> Result<Array2<f64>> {
    let (a, b, c) = (params.alpha, params.beta, params.gamma);
    let n = fo_current.nrows();
    let l = fo_current.ncols();
    let pulled = km.dot(fg);
    let mass = km.sum_axis(Axis(1));
    let mut neighbours = vec![0.0; l];

    match sweep {
        Sweep::GaussSeidel => {
            let mut fo = fo_current.clone();
            let mut cache = kc.sweep_cache(fo.view());
            let mut old = Array1::zeros(l);
            for i in 0..n {
                kc.neighbour_sum(&cache, fo.view(), i, &mut neighbours);
                let off_diag = kc.row_sum(i) - kc.diagonal(i);
                let den = a * mass[i] + 2.0 * b * off_diag + 2.0 * c;
                if !(den > 0.0) {
                    return Err(Error::Denominator {
                        block: "object",
                        index: i,
                        value: den,
                    });
                }
                old.assign(&fo.row(i));
                let mut row = fo.row_mut(i);
                for p in 0..l {
                    row[p] = (a * pulled[[i, p]] + 2.0 * b * neighbours[p] + 2.0 * c * yo[[i, p]])
                        / den;
                }
                kc.commit(&mut cache, i, old.view(), fo.row(i));
            }
            Ok(fo)
        }
        Sweep::Jacobi => {
            let cache = kc.sweep_cache(fo_current.view());
            let mut fo = Array2::zeros((n, l));
            for i in 0..n {
                kc.neighbour_sum(&cache, fo_current.view(), i, &mut neighbours);
                let kii = kc.diagonal(i);
                let den = a * mass[i] + b * (2.0 * kc.row_sum(i) - kii) + 2.0 * c;
                if !(den > 0.0) {
                    return Err(Error::Denominator {
                        block: "object",
                        index: i,
                        value: den,
                    });
                }
                for p in 0..l {
                    // neighbours excludes j = i; 2 K_ii F_i - K_ii F_i = K_ii F_i.
                    let smooth = 2.0 * neighbours[p] + kii * fo_current[[i, p]];
                    fo[[i, p]] = (a * pulled[[i, p]] + b * smooth + 2.0 * c * yo[[i, p]]) / den;
                }
            }
            Ok(fo)
        }
    }
}

pub fn solve(m: &ConsensusMatrices, config: &SolverConfig) -> Result<SolverResult> {
    solve_observed(m, config, |_, _| {})
}

/// [`solve`] with a callback invoked on the initial point and after every
/// half-step.
pub fn solve_observed(
    m: &ConsensusMatrices,
    config: &SolverConfig,
    mut observer: impl FnMut(Stage, &ClassDistributions),
) -> Result<SolverResult> {
    config.validate()?;
    let p = &config.params;
    let (n, g, l) = (m.num_objects(), m.num_groups(), m.num_classes());
    let mut f = init_distributions(n, g, l, config.seed);
    observer(Stage::Initial, &f);
    let initial_objective = eval_components(&f, m)?.weighted(p);

    let delta_scale = if config.normalized_delta {
        ((n * l) as f64).sqrt()
    } else {
        1.0
    };
    let mut trace = Vec::new();
    let mut best: Option<(f64, ClassDistributions)> = None;
    let mut converged = false;

    for t in 1..=config.max_iterations {
        f.groups = update_groups(&f.objects, &m.km, &m.yg, p)?;
        debug_assert!(f.stochastic_violation() <= 1e-9);
        observer(Stage::AfterGroups(t), &f);
        let objective_after_groups = eval_components(&f, m)?.weighted(p);

        let next = update_objects(&f.groups, &f.objects, &m.km, &m.kc, &m.yo, p, config.sweep)?;
        let delta = frobenius(&next, &f.objects) / delta_scale;
        f.objects = next;
        debug_assert!(f.stochastic_violation() <= 1e-9);
        observer(Stage::AfterObjects(t), &f);
        let components = eval_components(&f, m)?;
        let objective = components.weighted(p);

        trace.push(IterationRecord {
            iteration: t,
            components,
            objective_after_groups,
            objective,
            delta,
        });
        if best.as_ref().map_or(true, |(b, _)| objective <= *b) {
            best = Some((objective, f.clone()));
        }
        if delta <= config.epsilon {
            converged = true;
            break;
        }
    }

    let distributions = if converged {
        f
    } else {
        best.map(|(_, f)| f).unwrap_or(f)
    };
    Ok(SolverResult {
        distributions,
        initial_objective,
        iterations_used: trace.len(),
        trace,
        converged,
    })
}

fn frobenius(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// 1-based argmax per row; ties go to the lowest class.
pub fn predict_labels(fo: &Array2<f64>) -> Vec<usize> {
    fo.rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            best + 1
        })
        .collect()
}

/// `iteration,J1,J2,J3,J4,objective,delta`
pub fn write_trace_csv<W: Write>(trace: &[IterationRecord], mut out: W) -> std::io::Result<()> {
    writeln!(out, "iteration,J1,J2,J3,J4,objective,delta")?;
    for r in trace {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.iteration,
            fmt_num(r.components.j1),
            fmt_num(r.components.j2),
            fmt_num(r.components.j3),
            fmt_num(r.components.j4),
            fmt_num(r.objective),
            fmt_num(r.delta)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn params(a: f64, b: f64, c: f64, d: f64) -> ObjectiveParams {
        ObjectiveParams::new(a, b, c, d).unwrap()
    }

    #[test]
    fn init_rows_are_stochastic_and_seeded() {
        let f = init_distributions(7, 4, 3, 11);
        assert!(f.stochastic_violation() <= 1e-12);
        assert_eq!(f, init_distributions(7, 4, 3, 11));
        assert_ne!(f, init_distributions(7, 4, 3, 12));
        let one = init_distributions(3, 2, 1, 0);
        assert!(one.objects.iter().chain(one.groups.iter()).all(|&x| x == 1.0));
    }

    #[test]
    fn group_update_hand_example() {
        // a = 0.25, d = 0.05; weights sum to 1 with b = 0.35, c = 0.35.
        let fg = update_groups(
            &array![[1.0, 0.0]],
            &array![[1.0]],
            &array![[0.5, 0.5]],
            &params(0.25, 0.35, 0.35, 0.05),
        )
        .unwrap();
        assert_abs_diff_eq!(fg[[0, 0]], 0.30 / 0.35, epsilon = 1e-12);
        assert_abs_diff_eq!(fg[[0, 1]], 0.05 / 0.35, epsilon = 1e-12);
    }

    #[test]
    fn group_update_without_prior_is_weighted_average() {
        let fo = array![[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]];
        let km = array![[0.2, 0.0], [0.6, 1.0], [0.0, 1.0]];
        let fg = update_groups(&fo, &km, &Array2::zeros((2, 2)), &params(0.5, 0.25, 0.25, 0.0))
            .unwrap();
        assert_abs_diff_eq!(fg[[0, 0]], 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(fg[[0, 1]], 0.75, epsilon = 1e-12);
        assert_abs_diff_eq!(fg[[1, 0]], 0.25, epsilon = 1e-12);
    }

    #[test]
    fn object_update_hand_example() {
        // a/2 + c = 1 here; the update itself does not check the constraint.
        let p = ObjectiveParams {
            alpha: 0.25,
            beta: 0.0,
            gamma: 0.875,
            delta: 0.0,
            constraint: crate::objective::WeightConstraint::HalfWeighted,
        };
        p.validate().unwrap();
        let kc = CooccurrenceKernel::dense(array![[1.0]]).unwrap();
        for sweep in [Sweep::GaussSeidel, Sweep::Jacobi] {
            let fo = update_objects(
                &array![[1.0, 0.0]],
                &array![[0.5, 0.5]],
                &array![[1.0]],
                &kc,
                &array![[0.0, 1.0]],
                &p,
                sweep,
            )
            .unwrap();
            assert_abs_diff_eq!(fo[[0, 0]], 0.125, epsilon = 1e-12);
            assert_abs_diff_eq!(fo[[0, 1]], 0.875, epsilon = 1e-12);
        }
    }

    #[test]
    fn shared_row_is_a_fixed_point() {
        let row = [0.2, 0.5, 0.3];
        let fo = Array2::from_shape_fn((3, 3), |(_, c)| row[c]);
        let fg = Array2::from_shape_fn((2, 3), |(_, c)| row[c]);
        let km = array![[0.5, 0.5], [1.0, 0.0], [0.0, 1.0]];
        let kc = CooccurrenceKernel::dense(Array2::from_elem((3, 3), 1.0 / 3.0)).unwrap();
        let p = ObjectiveParams::default();
        for sweep in [Sweep::GaussSeidel, Sweep::Jacobi] {
            let next = update_objects(&fg, &fo, &km, &kc, &fo, &p, sweep).unwrap();
            for (x, y) in next.iter().zip(fo.iter()) {
                assert_abs_diff_eq!(x, y, epsilon = 1e-14);
            }
        }
        let g = update_groups(&fo, &km, &fg, &p).unwrap();
        for (x, y) in g.iter().zip(fg.iter()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-14);
        }
    }

    #[test]
    fn labels_break_ties_low() {
        let fo = array![[0.2, 0.8], [0.5, 0.5], [0.0, 1.0], [1.0, 0.0]];
        assert_eq!(predict_labels(&fo), vec![2, 1, 2, 1]);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let mut c = SolverConfig::default();
        c.epsilon = 0.0;
        assert!(c.validate().is_err());
        c.epsilon = 0.1;
        c.max_iterations = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn trace_csv_has_header_and_rows() {
        let rec = IterationRecord {
            iteration: 1,
            components: Components {
                j1: 1.0,
                j2: 2.0,
                j3: 3.0,
                j4: 4.0,
            },
            objective_after_groups: 5.0,
            objective: 4.5,
            delta: 0.125,
        };
        let mut buf = Vec::new();
        write_trace_csv(&[rec], &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s, "iteration,J1,J2,J3,J4,objective,delta\n1,1,2,3,4,4.5,0.125\n");
    }
}
