use ec3_core::kernel::CooccurrenceKernel;
use ec3_core::objective::WeightConstraint;
use ec3_core::*;
use ndarray::{array, Array2, ArrayViewMut1};
use rand::Rng;

use super::{random_stochastic, rng};

/// Euclidean projection onto the probability simplex (sort-based).
pub fn project_simplex(mut v: ArrayViewMut1<f64>) {
    let mut u: Vec<f64> = v.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (k, &x) in u.iter().enumerate() {
        cum += x;
        let t = (cum - 1.0) / (k + 1) as f64;
        if x - t > 0.0 {
            tau = t;
        }
    }
    v.mapv_inplace(|x| (x - tau).max(0.0));
}

pub struct Instance {
    km: Array2<f64>,
    kc: Array2<f64>,
    yo: Array2<f64>,
    yg: Array2<f64>,
    params: ObjectiveParams,
}

fn instance(seed: u64) -> Instance {
    let (n, g, l) = (3, 4, 2);
    let mut r = rng(seed);
    let km = Array2::from_shape_fn((n, g), |_| r.gen::<f64>());
    let mut kc = Array2::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            let v = r.gen::<f64>();
            kc[[i, j]] = v;
            kc[[j, i]] = v;
        }
    }
    let yo = random_stochastic(n, l, &mut r);
    let yg = random_stochastic(g, l, &mut r);
    let mut w = [0.05 + r.gen::<f64>(), r.gen::<f64>(), 0.05 + r.gen::<f64>(), 0.05 + r.gen::<f64>()];
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= s);
    let delta = 1.0 - w[0] - w[1] - w[2];
    let params = ObjectiveParams::new(w[0], w[1], w[2], delta).unwrap();
    Instance { km, kc, yo, yg, params }
}

/// Hand-written gradient of the objective.
fn gradient(x: &Instance, fo: &Array2<f64>, fg: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
    let p = &x.params;
    let (n, g) = x.km.dim();
    let mut go = Array2::zeros(fo.dim());
    let mut gg = Array2::zeros(fg.dim());
    for i in 0..n {
        for j in 0..g {
            let d = &fo.row(i) - &fg.row(j);
            let mut r = go.row_mut(i);
            r.scaled_add(p.alpha * x.km[[i, j]], &d);
            let mut r = gg.row_mut(j);
            r.scaled_add(-p.alpha * x.km[[i, j]], &d);
        }
        for j in 0..n {
            let d = &fo.row(i) - &fo.row(j);
            let mut r = go.row_mut(i);
            r.scaled_add(2.0 * p.beta * x.kc[[i, j]], &d);
        }
    }
    go.scaled_add(2.0 * p.gamma, &(fo - &x.yo));
    gg.scaled_add(2.0 * p.delta, &(fg - &x.yg));
    (go, gg)
}

fn value(x: &Instance, fo: &Array2<f64>, fg: &Array2<f64>) -> f64 {
    let p = &x.params;
    let sq = |a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>| -> f64 {
        a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
    };
    let (n, g) = x.km.dim();
    let mut j1 = 0.0;
    let mut j2 = 0.0;
    for i in 0..n {
        for j in 0..g {
            j1 += x.km[[i, j]] * sq(fo.row(i), fg.row(j));
        }
        for j in 0..n {
            j2 += x.kc[[i, j]] * sq(fo.row(i), fo.row(j));
        }
    }
    let j3: f64 = (0..n).map(|i| sq(fo.row(i), x.yo.row(i))).sum();
    let j4: f64 = (0..g).map(|j| sq(fg.row(j), x.yg.row(j))).sum();
    p.alpha / 2.0 * j1 + p.beta / 2.0 * j2 + p.gamma * j3 + p.delta * j4
}

fn projected_gradient(x: &Instance, steps: usize) -> (Array2<f64>, Array2<f64>) {
    let p = &x.params;
    let row_max = |m: &Array2<f64>| m.rows().into_iter().map(|r| r.sum()).fold(0.0, f64::max);
    let col_max = |m: &Array2<f64>| m.columns().into_iter().map(|r| r.sum()).fold(0.0, f64::max);
    let lipschitz = p.alpha * (row_max(&x.km) + col_max(&x.km)) + 4.0 * p.beta * row_max(&x.kc)
        + 2.0 * (p.gamma + p.delta);
    let eta = 1.0 / lipschitz;
    let mut fo = Array2::from_elem(x.yo.dim(), 0.5);
    let mut fg = Array2::from_elem(x.yg.dim(), 0.5);
    for _ in 0..steps {
        let (go, gg) = gradient(x, &fo, &fg);
        fo.scaled_add(-eta, &go);
        fg.scaled_add(-eta, &gg);
        fo.rows_mut().into_iter().for_each(project_simplex);
        fg.rows_mut().into_iter().for_each(project_simplex);
    }
    (fo, fg)
}

pub fn oracle_gaps(count: u64) -> Vec<f64> {
    (0..count)
        .map(|seed| {
            let x = instance(seed);
            let m = ConsensusMatrices::new(
                x.km.clone(),
                CooccurrenceKernel::dense(x.kc.clone()).unwrap(),
                x.yo.clone(),
                x.yg.clone(),
            )
            .unwrap();
            let cfg = SolverConfig {
                params: x.params,
                epsilon: 1e-13,
                max_iterations: 100_000,
                ..Default::default()
            };
            let bcd = solve(&m, &cfg).unwrap();
            let (fo, fg) = projected_gradient(&x, 100_000);
            let ours = eval_objective(&bcd.distributions, &x.params, &m).unwrap();
            assert!((ours - value(&x, &bcd.distributions.objects, &bcd.distributions.groups)).abs() < 1e-12);
            (ours - value(&x, &fo, &fg)).abs()
        })
        .collect()
}

pub fn update_examples() -> ([f64; 2], [f64; 2]) {
    let params = ObjectiveParams { alpha: 0.25, delta: 0.05, ..Default::default() };
    let fg = update_groups(&array![[1.0, 0.0]], &array![[1.0]], &array![[0.5, 0.5]], &params).unwrap();

    let params =
        ObjectiveParams::with_constraint(0.25, 0.0, 0.875, 0.0, WeightConstraint::HalfWeighted).unwrap();
    let kc = CooccurrenceKernel::dense(array![[1.0]]).unwrap();
    let fo = update_objects(
        &array![[1.0, 0.0]],
        &array![[0.5, 0.5]],
        &array![[1.0]],
        &kc,
        &array![[0.0, 1.0]],
        &params,
        Sweep::GaussSeidel,
    )
    .unwrap();
    ([fg[[0, 0]], fg[[0, 1]]], [fo[[0, 0]], fo[[0, 1]]])
}

