//! Experiment drivers. Every driver is deterministic given its config;
//! wall-clock measurements go to the separate timing report.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::base::{majority_vote, run_base_methods, BaseRun, Split, CLASSIFIER_NAMES};
use super::inject::{ablate_component, inject_imbalance, inject_random_classifier, inject_random_clusterer};
use super::learners::{kmeans, nearest_centroid};
use super::report::{polyfit, ExperimentOutput, ExperimentReport, MeanSd, RunRow, TimingReport, TimingRow};
use super::synthetic::{generate_synthetic, iris_like, Dataset, SyntheticSpec};
use crate::ensemble::EnsembleInput;
use crate::error::{Error, Result};
use crate::eval::{auc_from, evaluate, f_score, one_hot, AucSource, MetricReport};
use crate::io::fmt_num;
use crate::objective::{ObjectiveParams, WeightConstraint};
use crate::pipeline::{prepare, ConsensusMatrices, Mode, PipelineOptions};
use crate::solver::{solve, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Compare,
    Sweep,
    Epsilon,
    Ablation,
    Robustness,
    Imbalance,
    Scaling,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        ExperimentKind::Compare,
        ExperimentKind::Sweep,
        ExperimentKind::Epsilon,
        ExperimentKind::Ablation,
        ExperimentKind::Robustness,
        ExperimentKind::Imbalance,
        ExperimentKind::Scaling,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Compare => "compare",
            ExperimentKind::Sweep => "sweep",
            ExperimentKind::Epsilon => "epsilon",
            ExperimentKind::Ablation => "ablation",
            ExperimentKind::Robustness => "robustness",
            ExperimentKind::Imbalance => "imbalance",
            ExperimentKind::Scaling => "scaling",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| {
                let valid: Vec<&str> = Self::ALL.iter().map(|k| k.name()).collect();
                Error::InvalidParams(format!(
                    "unknown experiment kind {s:?}; valid kinds: {}",
                    valid.join(", ")
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    IrisLike { seed: u64 },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic(SyntheticSpec::default())
    }
}

impl DataSource {
    /// The dataset of repeat `r`: the configured seed plus `r`.
    pub fn generate(&self, r: usize) -> Result<Dataset> {
        match *self {
            DataSource::Synthetic(spec) => generate_synthetic(&SyntheticSpec {
                seed: spec.seed.wrapping_add(r as u64),
                ..spec
            }),
            DataSource::IrisLike { seed } => Ok(iris_like(seed.wrapping_add(r as u64))),
        }
    }
}

/// Settings shared by the accuracy experiments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Common {
    pub data: DataSource,
    pub repeats: usize,
    /// Repeat `r` uses seed `seed + r` for the split, the learners and the
    /// solver start.
    pub seed: u64,
    pub split: Split,
    pub solver: SolverConfig,
    pub pipeline: PipelineOptions,
    pub auc_source: AucSource,
}

impl Default for Common {
    fn default() -> Self {
        Self {
            data: DataSource::default(),
            repeats: 10,
            seed: 0,
            split: Split::default(),
            solver: SolverConfig::default(),
            pipeline: PipelineOptions::default(),
            auc_source: AucSource::Scores,
        }
    }
}

impl Common {
    fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        self.split.validate()?;
        if self.repeats == 0 {
            return Err(Error::InvalidParams("repeats must be >= 1".into()));
        }
        if let DataSource::Synthetic(s) = &self.data {
            s.validate()?;
        }
        Ok(())
    }

    fn seed_of(&self, r: usize) -> u64 {
        self.seed.wrapping_add(r as u64)
    }

    fn solver_for(&self, r: usize) -> SolverConfig {
        SolverConfig {
            seed: self.seed_of(r),
            ..self.solver
        }
    }

    fn replicate(&self, r: usize) -> Result<BaseRun> {
        let data = self.data.generate(r)?;
        run_base_methods(&data, self.split, self.seed_of(r))
    }
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidParams(format!("cannot start {jobs} worker threads: {e}")))
}

/// Order-preserving parallel map; `jobs == 0` lets rayon decide.
fn par_map<T: Sync, R: Send>(
    jobs: usize,
    items: &[T],
    f: impl Fn(&T) -> Result<R> + Sync + Send,
) -> Result<Vec<R>> {
    pool(jobs)?.install(|| items.par_iter().map(f).collect())
}

fn fused_metrics(
    m: &ConsensusMatrices,
    truth: &[usize],
    cfg: &SolverConfig,
    source: AucSource,
) -> Result<(MetricReport, usize)> {
    let result = solve(m, cfg)?;
    let report = evaluate(result.distributions.objects.view(), truth, source)?;
    Ok((report, result.iterations_used))
}

/// Metrics of a method that only produces labels.
pub fn label_metrics(pred: &[usize], truth: &[usize], l: usize) -> Result<MetricReport> {
    let scores = one_hot(pred, l)?;
    let auc = auc_from(AucSource::Scores, scores.view(), pred, truth)?;
    let f = f_score(pred, truth, l)?;
    Ok(MetricReport {
        auc,
        f_score: f.f_score,
        per_class_f: f.per_class_f,
        support: f.support,
    })
}

fn row(setting: impl Into<String>, method: impl Into<String>, repeat: usize, seed: u64, metrics: MetricReport) -> RunRow {
    RunRow {
        setting: setting.into(),
        method: method.into(),
        repeat,
        seed,
        metrics,
        iterations: None,
        extra: BTreeMap::new(),
    }
}

fn echo<T: Serialize>(cfg: &T) -> serde_json::Value {
    serde_json::to_value(cfg).expect("configs serialize")
}

fn no_timings(kind: ExperimentKind) -> TimingReport {
    TimingReport::new(kind.name(), Vec::new(), serde_json::Value::Null)
}

// ---------------------------------------------------------------------------
// compare

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct CompareConfig {
    pub common: Common,
}

/// Both fusion modes against majority vote and every base classifier.
pub fn compare_methods(cfg: &CompareConfig, jobs: usize) -> Result<ExperimentOutput> {
    let c = &cfg.common;
    c.validate()?;
    let reps: Vec<usize> = (0..c.repeats).collect();
    let per_rep = par_map(jobs, &reps, |&r| {
        let base = c.replicate(r)?;
        let truth = base.truth();
        let l = base.input.num_classes();
        let seed = c.seed_of(r);
        let mut rows = Vec::new();
        for mode in [Mode::Iec3, Mode::Ec3] {
            let p = prepare(&base.input, mode, c.pipeline)?;
            let scfg = SolverConfig { mode, ..c.solver_for(r) };
            let (m, it) = fused_metrics(&p.matrices, truth, &scfg, c.auc_source)?;
            let mut rw = row("all", mode.to_string(), r, seed, m);
            rw.iterations = Some(it);
            rows.push(rw);
        }
        rows.push(row("all", "majority_vote", r, seed, label_metrics(&majority_vote(&base.input), truth, l)?));
        for (name, out) in CLASSIFIER_NAMES.iter().zip(base.input.classifier_outputs()) {
            rows.push(row("all", *name, r, seed, label_metrics(out, truth, l)?));
        }
        Ok(rows)
    })?;
    let runs: Vec<RunRow> = per_rep.into_iter().flatten().collect();
    let mean_auc = |method: &str| {
        MeanSd::of(&runs.iter().filter(|r| r.method == method).map(|r| r.metrics.auc).collect::<Vec<_>>()).mean
    };
    let best_base = CLASSIFIER_NAMES
        .iter()
        .map(|n| (n.to_string(), mean_auc(n)))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    let summary = json!({
        "iec3_auc": mean_auc("iec3"),
        "ec3_auc": mean_auc("ec3"),
        "majority_vote_auc": mean_auc("majority_vote"),
        "best_base_classifier": best_base.0,
        "best_base_classifier_auc": best_base.1,
    });
    Ok(ExperimentOutput {
        report: ExperimentReport::new("compare", echo(cfg), runs, summary),
        timings: no_timings(ExperimentKind::Compare),
    })
}

// ---------------------------------------------------------------------------
// sweep

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub common: Common,
    pub step: f64,
    /// Fraction of grid points reported as the top set.
    pub top_fraction: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            common: Common {
                repeats: 3,
                ..Common::default()
            },
            step: 0.05,
            top_fraction: 0.10,
        }
    }
}

/// Every `(alpha, beta, gamma, delta)` on the grid `{0, step, ..., 1}` that
/// satisfies `constraint` and has `alpha > 0`, in lexicographic order.
pub fn weight_grid(step: f64, constraint: WeightConstraint) -> Result<Vec<[f64; 4]>> {
    let n = (1.0 / step).round();
    if !(step > 0.0) || (n * step - 1.0).abs() > 1e-9 || n > 1000.0 {
        return Err(Error::InvalidParams(format!(
            "grid step {step} must divide 1 into at most 1000 parts"
        )));
    }
    let n = n as i64;
    // Constraint in units of step, doubled so both forms have integer
    // coefficients.
    let coef: [i64; 4] = match constraint {
        WeightConstraint::UnitSum => [2, 2, 2, 2],
        WeightConstraint::HalfWeighted => [1, 1, 2, 2],
    };
    let target = 2 * n;
    let mut out = Vec::new();
    for a in 1..=n {
        for b in 0..=n {
            for c in 0..=n {
                let rest = target - coef[0] * a - coef[1] * b - coef[2] * c;
                if rest < 0 || rest % coef[3] != 0 || rest / coef[3] > n {
                    continue;
                }
                let d = rest / coef[3];
                let w = [a, b, c, d].map(|k| k as f64 / n as f64);
                out.push(w);
            }
        }
    }
    Ok(out)
}

fn weights_label(w: &[f64; 4]) -> String {
    format!("a={},b={},c={},d={}", fmt_num(w[0]), fmt_num(w[1]), fmt_num(w[2]), fmt_num(w[3]))
}

pub fn parameter_sweep(cfg: &SweepConfig, jobs: usize) -> Result<ExperimentOutput> {
    let c = &cfg.common;
    c.validate()?;
    if !(cfg.top_fraction > 0.0 && cfg.top_fraction <= 1.0) {
        return Err(Error::InvalidParams(format!("top_fraction {} outside (0, 1]", cfg.top_fraction)));
    }
    let constraint = c.solver.params.constraint;
    let grid = weight_grid(cfg.step, constraint)?;
    let mut runs = Vec::new();
    for r in 0..c.repeats {
        let base = c.replicate(r)?;
        let prepared = prepare(&base.input, c.solver.mode, c.pipeline)?;
        let truth = base.truth();
        let rows = par_map(jobs, &grid, |w| {
            let params = ObjectiveParams::with_constraint(w[0], w[1], w[2], w[3], constraint)?;
            let scfg = SolverConfig { params, ..c.solver_for(r) };
            let (m, it) = fused_metrics(&prepared.matrices, truth, &scfg, c.auc_source)?;
            let mut rw = row(weights_label(w), c.solver.mode.to_string(), r, c.seed_of(r), m);
            rw.iterations = Some(it);
            Ok(rw)
        })?;
        runs.extend(rows);
    }

    let report = ExperimentReport::new("sweep", echo(cfg), runs, serde_json::Value::Null);
    let mut ranked: Vec<(usize, f64)> = grid
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let a = report.aggregate_for(&weights_label(w), &c.solver.mode.to_string());
            (i, a.map_or(f64::NAN, |a| a.auc.mean))
        })
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let top_n = ((grid.len() as f64 * cfg.top_fraction).ceil() as usize).max(1);
    let top: Vec<_> = ranked[..top_n]
        .iter()
        .map(|&(i, auc)| json!({"alpha": grid[i][0], "beta": grid[i][1], "gamma": grid[i][2], "delta": grid[i][3], "auc": auc}))
        .collect();
    let mut histogram = serde_json::Map::new();
    for (p, name) in ["alpha", "beta", "gamma", "delta"].iter().enumerate() {
        let mut h = BTreeMap::new();
        let steps = (1.0 / cfg.step).round() as usize;
        for k in 0..=steps {
            h.insert(fmt_num(k as f64 / steps as f64), 0usize);
        }
        for &(i, _) in &ranked[..top_n] {
            *h.entry(fmt_num(grid[i][p])).or_insert(0) += 1;
        }
        histogram.insert(name.to_string(), json!(h));
    }
    let default_w = ObjectiveParams::default().weights();
    let contains_default = grid
        .iter()
        .any(|w| w.iter().zip(&default_w).all(|(a, b)| (a - b).abs() < 1e-9));
    let summary = json!({
        "grid_points": grid.len(),
        "contains_default": contains_default,
        "top": top,
        "histogram": histogram,
    });
    Ok(ExperimentOutput {
        report: ExperimentReport { summary, ..report },
        timings: no_timings(ExperimentKind::Sweep),
    })
}

// ---------------------------------------------------------------------------
// epsilon

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpsilonConfig {
    pub common: Common,
    pub epsilons: Vec<f64>,
}

impl Default for EpsilonConfig {
    fn default() -> Self {
        Self {
            common: Common::default(),
            epsilons: vec![0.005, 0.010, 0.015, 0.020, 0.025, 0.030],
        }
    }
}

fn eps_label(e: f64) -> String {
    format!("eps={}", fmt_num(e))
}

/// Accuracy and runtime per threshold, each relative to the smallest
/// threshold. Runs sequentially so the timings are comparable.
pub fn epsilon_tradeoff(cfg: &EpsilonConfig) -> Result<ExperimentOutput> {
    let c = &cfg.common;
    c.validate()?;
    if cfg.epsilons.is_empty() || cfg.epsilons.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::InvalidParams("epsilons must be a non-empty list of positive values".into()));
    }
    let mut eps = cfg.epsilons.clone();
    eps.sort_by(f64::total_cmp);
    eps.dedup();
    let mode = c.solver.mode.to_string();
    let mut runs = Vec::new();
    let mut timing = Vec::new();
    for r in 0..c.repeats {
        let base = c.replicate(r)?;
        let prepared = prepare(&base.input, c.solver.mode, c.pipeline)?;
        for &e in &eps {
            let scfg = SolverConfig { epsilon: e, ..c.solver_for(r) };
            let t0 = Instant::now();
            let result = solve(&prepared.matrices, &scfg)?;
            let secs = t0.elapsed().as_secs_f64();
            let m = evaluate(result.distributions.objects.view(), base.truth(), c.auc_source)?;
            let mut rw = row(eps_label(e), mode.clone(), r, c.seed_of(r), m);
            rw.iterations = Some(result.iterations_used);
            runs.push(rw);
            timing.push(TimingRow {
                setting: eps_label(e),
                method: mode.clone(),
                repeat: r,
                seconds: secs,
            });
        }
    }
    let report = ExperimentReport::new("epsilon", echo(cfg), runs, serde_json::Value::Null);
    let auc_of = |e: f64| report.aggregate_for(&eps_label(e), &mode).map_or(f64::NAN, |a| a.auc.mean);
    let ref_auc = auc_of(eps[0]);
    let normalized: Vec<_> = eps
        .iter()
        .map(|&e| json!({"epsilon": e, "auc": auc_of(e), "normalized_auc": auc_of(e) / ref_auc}))
        .collect();
    let secs_of = |e: f64| {
        MeanSd::of(&timing.iter().filter(|t| t.setting == eps_label(e)).map(|t| t.seconds).collect::<Vec<_>>()).mean
    };
    let ref_secs = secs_of(eps[0]);
    let runtime: Vec<_> = eps
        .iter()
        .map(|&e| json!({"epsilon": e, "seconds": secs_of(e), "normalized_runtime": secs_of(e) / ref_secs}))
        .collect();
    Ok(ExperimentOutput {
        report: ExperimentReport {
            summary: json!({ "normalized": normalized }),
            ..report
        },
        timings: TimingReport::new("epsilon", timing, json!({ "normalized": runtime })),
    })
}

// ---------------------------------------------------------------------------
// ablation

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct AblationConfig {
    pub common: Common,
}

pub fn ablation(cfg: &AblationConfig, jobs: usize) -> Result<ExperimentOutput> {
    let c = &cfg.common;
    c.validate()?;
    let mut variants = vec![("full".to_string(), c.solver.params)];
    for k in 1..=4 {
        variants.push((format!("drop={k}"), ablate_component(&c.solver.params, k)?));
    }
    let reps: Vec<usize> = (0..c.repeats).collect();
    let mode = c.solver.mode.to_string();
    let per_rep = par_map(jobs, &reps, |&r| {
        let base = c.replicate(r)?;
        let prepared = prepare(&base.input, c.solver.mode, c.pipeline)?;
        variants
            .iter()
            .map(|(name, params)| {
                let scfg = SolverConfig { params: *params, ..c.solver_for(r) };
                let (m, it) = fused_metrics(&prepared.matrices, base.truth(), &scfg, c.auc_source)?;
                let mut rw = row(name.clone(), mode.clone(), r, c.seed_of(r), m);
                rw.iterations = Some(it);
                Ok(rw)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let report = ExperimentReport::new("ablation", echo(cfg), per_rep.into_iter().flatten().collect(), serde_json::Value::Null);
    let auc = |s: &str| report.aggregate_for(s, &mode).map_or(f64::NAN, |a| a.auc.mean);
    let full = auc("full");
    let drops: BTreeMap<String, f64> = (1..=4).map(|k| (format!("drop={k}"), full - auc(&format!("drop={k}")))).collect();
    let summary = json!({ "full_auc": full, "auc_reduction": drops });
    Ok(ExperimentOutput {
        report: ExperimentReport { summary, ..report },
        timings: no_timings(ExperimentKind::Ablation),
    })
}

// ---------------------------------------------------------------------------
// robustness

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RobustnessConfig {
    pub common: Common,
    pub counts: Vec<usize>,
}

impl Default for RobustnessConfig {
    fn default() -> Self {
        Self {
            common: Common::default(),
            counts: vec![0, 5, 10, 15],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Noise {
    Classifiers,
    Clusterers,
}

impl Noise {
    fn label(self, k: usize) -> String {
        match self {
            Noise::Classifiers => format!("random_classifiers={k}"),
            Noise::Clusterers => format!("random_clusterers={k}"),
        }
    }

    fn salt(self) -> u64 {
        match self {
            Noise::Classifiers => 0x636c_6173,
            Noise::Clusterers => 0x636c_7573,
        }
    }
}

pub fn robustness(cfg: &RobustnessConfig, jobs: usize) -> Result<ExperimentOutput> {
    let c = &cfg.common;
    c.validate()?;
    let mut counts = cfg.counts.clone();
    if !counts.contains(&0) {
        counts.insert(0, 0);
    }
    counts.sort_unstable();
    counts.dedup();
    let mode = c.solver.mode.to_string();
    let reps: Vec<usize> = (0..c.repeats).collect();
    let per_rep = par_map(jobs, &reps, |&r| {
        let base = c.replicate(r)?;
        let mut rows = Vec::new();
        for noise in [Noise::Classifiers, Noise::Clusterers] {
            for &k in &counts {
                let s = c.seed_of(r) ^ noise.salt();
                let input = match noise {
                    Noise::Classifiers => inject_random_classifier(&base.input, k, s)?,
                    Noise::Clusterers => inject_random_clusterer(&base.input, k, s)?,
                };
                let prepared = prepare(&input, c.solver.mode, c.pipeline)?;
                let (m, it) = fused_metrics(&prepared.matrices, base.truth(), &c.solver_for(r), c.auc_source)?;
                let mut rw = row(noise.label(k), mode.clone(), r, c.seed_of(r), m);
                rw.iterations = Some(it);
                rows.push(rw);
            }
        }
        Ok(rows)
    })?;
    let report = ExperimentReport::new("robustness", echo(cfg), per_rep.into_iter().flatten().collect(), serde_json::Value::Null);
    let auc = |s: String| report.aggregate_for(&s, &mode).map_or(f64::NAN, |a| a.auc.mean);
    let mut summary = serde_json::Map::new();
    for (name, noise) in [("random_classifiers", Noise::Classifiers), ("random_clusterers", Noise::Clusterers)] {
        let clean = auc(noise.label(0));
        let per: Vec<_> = counts
            .iter()
            .map(|&k| {
                let a = auc(noise.label(k));
                json!({"count": k, "auc": a, "retained": a / clean, "degradation": clean - a})
            })
            .collect();
        summary.insert(name.into(), json!(per));
    }
    Ok(ExperimentOutput {
        report: ExperimentReport {
            summary: serde_json::Value::Object(summary),
            ..report
        },
        timings: no_timings(ExperimentKind::Robustness),
    })
}

// ---------------------------------------------------------------------------
// imbalance

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImbalanceConfig {
    pub common: Common,
    pub percents: Vec<f64>,
    pub modes: Vec<Mode>,
}

impl Default for ImbalanceConfig {
    fn default() -> Self {
        Self {
            common: Common::default(),
            percents: (0..=6).map(|k| 5.0 * k as f64).collect(),
            modes: vec![Mode::Ec3, Mode::Iec3],
        }
    }
}

fn x_label(x: f64) -> String {
    format!("x={}", fmt_num(x))
}

/// Removes `x%` of one random class before splitting, then fuses with each
/// mode. Rows carry the F-score of the manipulated class.
pub fn imbalance(cfg: &ImbalanceConfig, jobs: usize) -> Result<ExperimentOutput> {
    let c = &cfg.common;
    c.validate()?;
    if cfg.percents.is_empty() || cfg.modes.is_empty() {
        return Err(Error::InvalidParams("percents and modes must be non-empty".into()));
    }
    let cells: Vec<(usize, f64)> = (0..c.repeats)
        .flat_map(|r| cfg.percents.iter().map(move |&x| (r, x)))
        .collect();
    let per_cell = par_map(jobs, &cells, |&(r, x)| {
        let data = c.data.generate(r)?;
        let im = inject_imbalance(&data, x, c.seed_of(r))?;
        let base = run_base_methods(&im.data, c.split, c.seed_of(r))?;
        cfg.modes
            .iter()
            .map(|&mode| {
                let p = prepare(&base.input, mode, c.pipeline)?;
                let scfg = SolverConfig { mode, ..c.solver_for(r) };
                let (m, it) = fused_metrics(&p.matrices, base.truth(), &scfg, c.auc_source)?;
                let manipulated = m.per_class_f[im.class - 1];
                let mut rw = row(x_label(x), mode.to_string(), r, c.seed_of(r), m);
                rw.iterations = Some(it);
                rw.extra.insert("manipulated_class".into(), im.class as f64);
                rw.extra.insert("manipulated_f".into(), manipulated);
                rw.extra.insert("removed".into(), im.removed as f64);
                Ok(rw)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let report = ExperimentReport::new("imbalance", echo(cfg), per_cell.into_iter().flatten().collect(), serde_json::Value::Null);
    let lo = cfg.percents.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = cfg.percents.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut summary = serde_json::Map::new();
    for mode in &cfg.modes {
        let m = mode.to_string();
        let get = |x: f64| report.aggregate_for(&x_label(x), &m).cloned();
        let (a, b) = (get(lo), get(hi));
        if let (Some(a), Some(b)) = (a, b) {
            let fa = a.extra.get("manipulated_f").map_or(f64::NAN, |v| v.mean);
            let fb = b.extra.get("manipulated_f").map_or(f64::NAN, |v| v.mean);
            summary.insert(
                m,
                json!({
                    "auc_at_min": a.auc.mean,
                    "auc_at_max": b.auc.mean,
                    "retained_auc": b.auc.mean / a.auc.mean,
                    "manipulated_f_at_min": fa,
                    "manipulated_f_at_max": fb,
                    "retained_manipulated_f": fb / fa,
                }),
            );
        }
    }
    Ok(ExperimentOutput {
        report: ExperimentReport {
            summary: serde_json::Value::Object(summary),
            ..report
        },
        timings: no_timings(ExperimentKind::Imbalance),
    })
}

// ---------------------------------------------------------------------------
// scaling

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScalingConfig {
    pub seed: u64,
    pub feature_dim: usize,
    pub cluster_separation: f64,
    /// Largest object count of the object sweep.
    pub num_objects: usize,
    pub object_fractions: Vec<f64>,
    /// Method count of the object and class sweeps.
    pub num_methods: usize,
    pub method_counts: Vec<usize>,
    /// Class count of the object and method sweeps.
    pub num_classes: usize,
    pub class_counts: Vec<usize>,
    /// Object count of the method sweep.
    pub sweep_objects: usize,
    /// The class sweep keeps the objects of the first `l` classes of one
    /// dataset, so its object count grows with `l`.
    pub objects_per_class: usize,
    /// Every timed run performs exactly this many solver iterations.
    pub iterations: usize,
    /// Each point is timed this many times and the minimum kept.
    pub timing_repeats: usize,
    pub mode: Mode,
    pub params: ObjectiveParams,
    pub pipeline: PipelineOptions,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            feature_dim: 4,
            cluster_separation: 3.0,
            num_objects: 20_000,
            object_fractions: (1..=10).map(|k| k as f64 / 10.0).collect(),
            num_methods: 10,
            method_counts: (2..=10).collect(),
            num_classes: 3,
            class_counts: (2..=10).collect(),
            sweep_objects: 5_000,
            objects_per_class: 500,
            iterations: 25,
            timing_repeats: 15,
            mode: Mode::Iec3,
            params: ObjectiveParams::default(),
            pipeline: PipelineOptions::default(),
        }
    }
}

/// `m` base methods alternating classifier / clusterer, starting with a
/// classifier. Classifiers are nearest-centroid models fit on bootstrap
/// samples; clusterers are k-means runs with different seeds.
pub fn method_family(data: &Dataset, m: usize, seed: u64) -> Result<EnsembleInput> {
    if m == 0 {
        return Err(Error::InvalidParams("method family needs at least one method".into()));
    }
    let l = data.num_classes;
    let n = data.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut classifiers = Vec::new();
    let mut clusterers = Vec::new();
    for k in 0..m {
        if k % 2 == 0 {
            let sample: Vec<usize> = (0..n.min(500)).map(|_| rng.gen_range(0..n)).collect();
            let boot = data.subset(&sample);
            classifiers.push(nearest_centroid(boot.features.view(), &boot.labels, l, data.features.view()));
        } else {
            let km = kmeans(data.features.view(), l, rng.gen(), 1);
            clusterers.push(km.assignment.into_iter().map(|a| a as i64).collect());
        }
    }
    EnsembleInput::new(l, classifiers, clusterers, None)
}

/// First `n` objects of `input`.
fn head(input: &EnsembleInput, n: usize) -> Result<EnsembleInput> {
    EnsembleInput::new(
        input.num_classes(),
        input.classifier_outputs().iter().map(|c| c[..n].to_vec()).collect(),
        input
            .clustering_outputs()
            .iter()
            .map(|c| c[..n].iter().map(|&v| v as i64).collect())
            .collect(),
        None,
    )
}

/// The first `m` methods of a family built by [`method_family`].
fn first_methods(input: &EnsembleInput, m: usize) -> Result<EnsembleInput> {
    let cls: Vec<usize> = (0..m.div_ceil(2)).collect();
    let clu: Vec<usize> = (0..m / 2).collect();
    input.select_methods(&cls, &clu)
}

#[derive(Debug, Clone, Copy)]
struct Timed {
    prepare: f64,
    solve: f64,
    iterations: usize,
}

/// Prepares every input once, then times `timing_repeats` rounds of solves.
/// Rounds visit all points in turn so a transient slowdown cannot bias one
/// point; each point keeps its fastest solve.
fn time_sweep(inputs: &[EnsembleInput], cfg: &ScalingConfig) -> Result<Vec<Timed>> {
    let scfg = SolverConfig {
        params: cfg.params,
        // Unreachable threshold: every run does `iterations` iterations.
        epsilon: f64::MIN_POSITIVE,
        max_iterations: cfg.iterations,
        mode: cfg.mode,
        seed: cfg.seed,
        ..SolverConfig::default()
    };
    let mut prepared = Vec::with_capacity(inputs.len());
    let mut out = Vec::with_capacity(inputs.len());
    for input in inputs {
        let t0 = Instant::now();
        prepared.push(prepare(input, cfg.mode, cfg.pipeline)?);
        out.push(Timed {
            prepare: t0.elapsed().as_secs_f64(),
            solve: f64::INFINITY,
            iterations: 0,
        });
    }
    for _ in 0..cfg.timing_repeats.max(1) {
        for (p, t) in prepared.iter().zip(out.iter_mut()) {
            let t1 = Instant::now();
            let result = solve(&p.matrices, &scfg)?;
            t.solve = t.solve.min(t1.elapsed().as_secs_f64());
            t.iterations = result.iterations_used;
        }
    }
    Ok(out)
}

fn synthetic(cfg: &ScalingConfig, n: usize, l: usize) -> Result<Dataset> {
    generate_synthetic(&SyntheticSpec {
        num_objects: n,
        num_classes: l,
        feature_dim: cfg.feature_dim,
        cluster_separation: cfg.cluster_separation,
        seed: cfg.seed,
    })
}

/// Runtime against object count, method count and class count, with
/// linear, linear and quadratic least-squares fits. Always sequential.
pub fn scaling_experiment(cfg: &ScalingConfig) -> Result<ExperimentOutput> {
    if cfg.iterations == 0 || cfg.object_fractions.is_empty() || cfg.method_counts.is_empty() || cfg.class_counts.is_empty() {
        return Err(Error::InvalidParams("scaling sweeps and iteration count must be non-empty".into()));
    }
    if cfg.class_counts.iter().any(|&l| l < 2) || cfg.objects_per_class == 0 {
        return Err(Error::InvalidParams("class sweep needs class counts >= 2 and objects_per_class >= 1".into()));
    }
    cfg.params.validate()?;

    let full = method_family(&synthetic(cfg, cfg.num_objects, cfg.num_classes)?, cfg.num_methods, cfg.seed)?;
    let ns: Vec<usize> = cfg
        .object_fractions
        .iter()
        .map(|&f| ((f * cfg.num_objects as f64).round() as usize).clamp(1, cfg.num_objects))
        .collect();
    let obj_inputs = ns.iter().map(|&n| head(&full, n)).collect::<Result<Vec<_>>>()?;
    drop(full);

    let max_m = *cfg.method_counts.iter().max().unwrap();
    let family = method_family(&synthetic(cfg, cfg.sweep_objects, cfg.num_classes)?, max_m, cfg.seed)?;
    let meth_inputs = cfg
        .method_counts
        .iter()
        .map(|&m| first_methods(&family, m))
        .collect::<Result<Vec<_>>>()?;

    let max_l = *cfg.class_counts.iter().max().unwrap();
    let all_classes = synthetic(cfg, cfg.objects_per_class * max_l, max_l)?;
    let cls_inputs = cfg
        .class_counts
        .iter()
        .map(|&l| {
            let keep: Vec<usize> = (0..all_classes.len()).filter(|&i| all_classes.labels[i] <= l).collect();
            let data = Dataset {
                num_classes: l,
                ..all_classes.subset(&keep)
            };
            method_family(&data, cfg.num_methods, cfg.seed)
        })
        .collect::<Result<Vec<_>>>()?;

    let sweeps = [
        ("objects", ns.iter().map(|&n| n as f64).collect::<Vec<_>>(), obj_inputs),
        ("methods", cfg.method_counts.iter().map(|&m| m as f64).collect(), meth_inputs),
        ("classes", cfg.class_counts.iter().map(|&l| l as f64).collect(), cls_inputs),
    ];
    let mut timing = Vec::new();
    let mut points = Vec::new();
    let mut fits = serde_json::Map::new();
    for (sweep, xs, inputs) in &sweeps {
        let times = time_sweep(inputs, cfg)?;
        for (x, t) in xs.iter().zip(&times) {
            let setting = format!("{sweep}={}", fmt_num(*x));
            timing.push(TimingRow { setting: setting.clone(), method: "prepare".into(), repeat: 0, seconds: t.prepare });
            timing.push(TimingRow { setting, method: "solve".into(), repeat: 0, seconds: t.solve });
            points.push(json!({"sweep": sweep, "x": x, "iterations": t.iterations}));
        }
        let (name, degree) = match *sweep {
            "classes" => ("classes_quadratic", 2),
            "objects" => ("objects_linear", 1),
            _ => ("methods_linear", 1),
        };
        let prep: Vec<f64> = times.iter().map(|t| t.prepare).collect();
        let solve: Vec<f64> = times.iter().map(|t| t.solve).collect();
        fits.insert(
            name.into(),
            json!({ "solve": polyfit(xs, &solve, degree), "prepare": polyfit(xs, &prep, degree) }),
        );
    }
    let report = ExperimentReport::new("scaling", echo(cfg), Vec::new(), json!({ "points": points }));
    Ok(ExperimentOutput {
        report,
        timings: TimingReport::new("scaling", timing, json!({ "fits": fits })),
    })
}

// ---------------------------------------------------------------------------
// dispatch

/// Flag-level overrides applied on top of a config file.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub mode: Option<Mode>,
    pub params: Option<ObjectiveParams>,
    pub epsilon: Option<f64>,
    pub seed: Option<u64>,
}

impl Overrides {
    fn apply(&self, c: &mut Common) {
        if let Some(m) = self.mode {
            c.solver.mode = m;
        }
        if let Some(p) = self.params {
            c.solver.params = p;
        }
        if let Some(e) = self.epsilon {
            c.solver.epsilon = e;
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExperimentConfig {
    Compare(CompareConfig),
    Sweep(SweepConfig),
    Epsilon(EpsilonConfig),
    Ablation(AblationConfig),
    Robustness(RobustnessConfig),
    Imbalance(ImbalanceConfig),
    Scaling(ScalingConfig),
}

impl ExperimentConfig {
    /// Parses `value` (`null` for all defaults) as the config of `kind`.
    pub fn from_json(kind: ExperimentKind, value: serde_json::Value) -> Result<Self> {
        let value = if value.is_null() { json!({}) } else { value };
        Ok(match kind {
            ExperimentKind::Compare => Self::Compare(serde_json::from_value(value)?),
            ExperimentKind::Sweep => Self::Sweep(serde_json::from_value(value)?),
            ExperimentKind::Epsilon => Self::Epsilon(serde_json::from_value(value)?),
            ExperimentKind::Ablation => Self::Ablation(serde_json::from_value(value)?),
            ExperimentKind::Robustness => Self::Robustness(serde_json::from_value(value)?),
            ExperimentKind::Imbalance => Self::Imbalance(serde_json::from_value(value)?),
            ExperimentKind::Scaling => Self::Scaling(serde_json::from_value(value)?),
        })
    }

    pub fn kind(&self) -> ExperimentKind {
        match self {
            Self::Compare(_) => ExperimentKind::Compare,
            Self::Sweep(_) => ExperimentKind::Sweep,
            Self::Epsilon(_) => ExperimentKind::Epsilon,
            Self::Ablation(_) => ExperimentKind::Ablation,
            Self::Robustness(_) => ExperimentKind::Robustness,
            Self::Imbalance(_) => ExperimentKind::Imbalance,
            Self::Scaling(_) => ExperimentKind::Scaling,
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        match self {
            Self::Compare(c) => o.apply(&mut c.common),
            Self::Sweep(c) => o.apply(&mut c.common),
            Self::Epsilon(c) => o.apply(&mut c.common),
            Self::Ablation(c) => o.apply(&mut c.common),
            Self::Robustness(c) => o.apply(&mut c.common),
            Self::Imbalance(c) => o.apply(&mut c.common),
            Self::Scaling(c) => {
                if let Some(m) = o.mode {
                    c.mode = m;
                }
                if let Some(p) = o.params {
                    c.params = p;
                }
                if let Some(s) = o.seed {
                    c.seed = s;
                }
            }
        }
    }

    /// Checks what can be checked without running anything.
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Compare(c) => c.common.validate(),
            Self::Sweep(c) => c.common.validate().and_then(|_| weight_grid(c.step, c.common.solver.params.constraint).map(|_| ())),
            Self::Epsilon(c) => c.common.validate(),
            Self::Ablation(c) => c.common.validate(),
            Self::Robustness(c) => c.common.validate(),
            Self::Imbalance(c) => c.common.validate(),
            Self::Scaling(c) => c.params.validate(),
        }
    }

    pub fn run(&self, jobs: usize) -> Result<ExperimentOutput> {
        match self {
            Self::Compare(c) => compare_methods(c, jobs),
            Self::Sweep(c) => parameter_sweep(c, jobs),
            Self::Epsilon(c) => epsilon_tradeoff(c),
            Self::Ablation(c) => ablation(c, jobs),
            Self::Robustness(c) => robustness(c, jobs),
            Self::Imbalance(c) => imbalance(c, jobs),
            Self::Scaling(c) => scaling_experiment(c),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Common {
        Common {
            data: DataSource::Synthetic(SyntheticSpec {
                num_objects: 150,
                ..SyntheticSpec::default()
            }),
            repeats: 2,
            ..Common::default()
        }
    }

    #[test]
    fn grid_holds_default_and_respects_constraint() {
        let g = weight_grid(0.05, WeightConstraint::UnitSum).unwrap();
        assert_eq!(g.len(), 1540);
        assert!(g.iter().any(|w| w.iter().zip([0.25, 0.35, 0.35, 0.05]).all(|(a, b)| (a - b).abs() < 1e-12)));
        for w in &g {
            assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            assert!(w[0] > 0.0);
        }
        let h = weight_grid(0.05, WeightConstraint::HalfWeighted).unwrap();
        for w in &h {
            assert!((w[0] / 2.0 + w[1] / 2.0 + w[2] + w[3] - 1.0).abs() <= 1e-9);
        }
        assert!(weight_grid(0.3, WeightConstraint::UnitSum).is_err());
    }

    #[test]
    fn kind_parsing_lists_valid_kinds() {
        assert_eq!("Sweep".parse::<ExperimentKind>().unwrap(), ExperimentKind::Sweep);
        let e = "bogus".parse::<ExperimentKind>().unwrap_err().to_string();
        assert!(e.contains("sweep") && e.contains("scaling"));
    }

    #[test]
    fn epsilon_rows_and_iterations() {
        let cfg = EpsilonConfig {
            common: Common { repeats: 1, ..small() },
            ..Default::default()
        };
        let out = epsilon_tradeoff(&cfg).unwrap();
        assert_eq!(out.report.runs.len(), 6);
        let norm = &out.report.summary["normalized"][0]["normalized_auc"];
        assert_eq!(norm.as_f64().unwrap(), 1.0);
        let its: Vec<usize> = out.report.runs.iter().map(|r| r.iterations.unwrap()).collect();
        assert!(its.windows(2).all(|w| w[1] <= w[0]), "{its:?}");
    }

    #[test]
    fn imbalance_row_count_and_determinism() {
        let cfg = ImbalanceConfig {
            common: small(),
            percents: vec![0.0, 30.0],
            ..Default::default()
        };
        let a = imbalance(&cfg, 2).unwrap();
        assert_eq!(a.report.runs.len(), 2 * 2 * 2);
        let b = imbalance(&cfg, 1).unwrap();
        assert_eq!(
            serde_json::to_string(&a.report).unwrap(),
            serde_json::to_string(&b.report).unwrap()
        );
    }

    #[test]
    fn config_round_trip_with_overrides() {
        let mut c = ExperimentConfig::from_json(ExperimentKind::Ablation, json!({"common": {"repeats": 4}})).unwrap();
        c.apply(&Overrides {
            mode: Some(Mode::Ec3),
            seed: Some(7),
            ..Default::default()
        });
        let ExperimentConfig::Ablation(a) = &c else { panic!() };
        assert_eq!(a.common.repeats, 4);
        assert_eq!(a.common.seed, 7);
        assert_eq!(a.common.solver.mode, Mode::Ec3);
        assert!(ExperimentConfig::from_json(ExperimentKind::Sweep, json!({"step": "x"})).is_err());
    }

    #[test]
    fn method_family_alternates() {
        let d = generate_synthetic(&SyntheticSpec { num_objects: 100, ..Default::default() }).unwrap();
        let f = method_family(&d, 5, 1).unwrap();
        assert_eq!((f.num_classifiers(), f.num_clusterers()), (3, 2));
        let two = first_methods(&f, 2).unwrap();
        assert_eq!((two.num_classifiers(), two.num_clusterers()), (1, 1));
        assert_eq!(head(&f, 10).unwrap().num_objects(), 10);
    }
}
