//! The `ec3` command line.

use std::collections::HashMap;
use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::{Error, ErrorKind, Result};
use crate::eval::{evaluate, AucSource, MetricReport};
use crate::harness::experiments::{ExperimentConfig, ExperimentKind, Overrides};
use crate::io::{
    default_manifest_path, distributions_csv, json_bytes, read_dataset, read_manifest,
    read_predictions, read_truth, write_atomic, SCHEMA_VERSION,
};
use crate::objective::{ObjectiveParams, WeightConstraint};
use crate::pipeline::{prepare, Mode, PipelineOptions, ScalingDiagnostics};
use crate::profiles;
use crate::solver::{solve, write_trace_csv, SolverConfig, Sweep};

pub const FUSE_SCHEMA: &str = "ec3.fuse/1";
pub const METRICS_SCHEMA: &str = "ec3.metrics/1";

#[derive(Debug, Parser)]
#[command(name = "ec3", version, about = "Fuse base classifiers and clusterers into class distributions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fuse one dataset of base-method outputs.
    Fuse(FuseArgs),
    /// Score a distributions file against true labels.
    Eval(EvalArgs),
    /// Run an experiment driver.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Ec3,
    Iec3,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Ec3 => Mode::Ec3,
            ModeArg::Iec3 => Mode::Iec3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConstraintArg {
    UnitSum,
    HalfWeighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepArg {
    GaussSeidel,
    Jacobi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AucSourceArg {
    Scores,
    Hard,
}

impl From<AucSourceArg> for AucSource {
    fn from(a: AucSourceArg) -> Self {
        match a {
            AucSourceArg::Scores => AucSource::Scores,
            AucSourceArg::Hard => AucSource::HardLabels,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct WeightArgs {
    /// Named weight preset.
    #[arg(long, conflicts_with_all = ["alpha", "beta", "gamma", "delta"])]
    pub profile: Option<String>,
    #[arg(long, requires_all = ["beta", "gamma", "delta"])]
    pub alpha: Option<f64>,
    #[arg(long, requires_all = ["alpha", "gamma", "delta"])]
    pub beta: Option<f64>,
    #[arg(long, requires_all = ["alpha", "beta", "delta"])]
    pub gamma: Option<f64>,
    #[arg(long, requires_all = ["alpha", "beta", "gamma"])]
    pub delta: Option<f64>,
    /// Additive constraint the explicit weights must satisfy.
    #[arg(long, value_enum, default_value_t = ConstraintArg::UnitSum, requires = "alpha")]
    pub constraint: ConstraintArg,
}

impl WeightArgs {
    /// `None` when neither a profile nor explicit weights were given.
    pub fn params(&self) -> Result<Option<ObjectiveParams>> {
        if let Some(name) = &self.profile {
            return profiles::profile(name).map(Some);
        }
        match (self.alpha, self.beta, self.gamma, self.delta) {
            (Some(a), Some(b), Some(c), Some(d)) => {
                let constraint = match self.constraint {
                    ConstraintArg::UnitSum => WeightConstraint::UnitSum,
                    ConstraintArg::HalfWeighted => WeightConstraint::HalfWeighted,
                };
                ObjectiveParams::with_constraint(a, b, c, d, constraint).map(Some)
            }
            _ => Ok(None),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct FuseArgs {
    /// Base-method outputs, one row per object.
    pub input: PathBuf,
    /// Dataset sidecar; defaults to the input path with a .json extension.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ModeArg::Iec3)]
    pub mode: ModeArg,
    #[command(flatten)]
    pub weights: WeightArgs,
    /// Stop once the object block changes by at most this much.
    #[arg(long, default_value_t = 0.025)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 500)]
    pub max_iterations: usize,
    #[arg(long, value_enum, default_value_t = SweepArg::GaussSeidel)]
    pub sweep: SweepArg,
    /// Seed of the random starting distributions.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Where to write the per-iteration trace; defaults to OUT/trace.csv.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// AUC input for the summary metrics when the input carries truth.
    #[arg(long, value_enum, default_value_t = AucSourceArg::Scores)]
    pub auc_source: AucSourceArg,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Distributions file written by `fuse`.
    pub predictions: PathBuf,
    /// `object_id,label` rows.
    pub truth: PathBuf,
    #[arg(long, value_enum, default_value_t = AucSourceArg::Scores)]
    pub auc_source: AucSourceArg,
    /// Also write the report to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ExperimentArgs {
    /// One of compare, sweep, epsilon, ablation, robustness, imbalance, scaling.
    pub kind: String,
    /// JSON config; omitted fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[command(flatten)]
    pub weights: WeightArgs,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

/// Pipeline step a failure is attributed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Parse,
    Matrices,
    Bistochastic,
    Solve,
    Eval,
    Experiment,
    Write,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Config => "config",
            Stage::Parse => "parse",
            Stage::Matrices => "matrices",
            Stage::Bistochastic => "bistochastic",
            Stage::Solve => "solve",
            Stage::Eval => "eval",
            Stage::Experiment => "experiment",
            Stage::Write => "write",
        })
    }
}

#[derive(Debug)]
pub struct Failure {
    pub stage: Stage,
    pub error: Error,
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self.error.kind() {
            ErrorKind::Validation => 2,
            ErrorKind::Numerical => 3,
            ErrorKind::Io => 4,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} stage failed: {}", self.stage, self.error)
    }
}

trait AtStage<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, Failure>;
}

impl<T> AtStage<T> for Result<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, Failure> {
        self.map_err(|error| Failure { stage, error })
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Errors are reported on standard error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let outcome = match &cli.command {
        Command::Fuse(a) => cmd_fuse(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Experiment(a) => cmd_experiment(a),
    };
    match outcome {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("ec3: {f}");
            f.exit_code()
        }
    }
}

#[derive(Serialize)]
struct FuseSummary<'a> {
    schema: &'static str,
    input_schema: &'static str,
    input: String,
    mode: Mode,
    params: ObjectiveParams,
    epsilon: f64,
    max_iterations: usize,
    sweep: Sweep,
    seed: u64,
    num_objects: usize,
    num_groups: usize,
    num_classes: usize,
    iterations: usize,
    converged: bool,
    initial_objective: f64,
    objective: f64,
    scaling: ScalingDiagnostics,
    #[serde(skip_serializing_if = "Option::is_none")]
    metrics: Option<&'a MetricReport>,
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn cmd_fuse(a: &FuseArgs) -> CliResult<()> {
    let config = SolverConfig {
        params: a.weights.params().at(Stage::Config)?.unwrap_or_default(),
        epsilon: a.epsilon,
        max_iterations: a.max_iterations,
        mode: a.mode.into(),
        seed: a.seed,
        sweep: match a.sweep {
            SweepArg::GaussSeidel => Sweep::GaussSeidel,
            SweepArg::Jacobi => Sweep::Jacobi,
        },
        normalized_delta: false,
    };
    config.validate().at(Stage::Config)?;

    fs::metadata(&a.input).map_err(|e| Error::io(&a.input, e)).at(Stage::Parse)?;
    let manifest_path = a.manifest.clone().unwrap_or_else(|| default_manifest_path(&a.input));
    let manifest = read_manifest(&manifest_path).at(Stage::Parse)?;
    let data = read_dataset(&a.input, &manifest).at(Stage::Parse)?;

    let prepared = prepare(&data.input, config.mode, PipelineOptions::default()).map_err(|error| {
        let stage = match error {
            Error::ZeroRow(_) | Error::ZeroColumn(_) | Error::NotSymmetric { .. } | Error::NegativeEntry(..) => {
                Stage::Bistochastic
            }
            _ => Stage::Matrices,
        };
        Failure { stage, error }
    })?;
    let result = solve(&prepared.matrices, &config).at(Stage::Solve)?;
    let labels = result.labels();
    let metrics = match data.input.true_labels() {
        Some(truth) => Some(evaluate(result.distributions.objects.view(), truth, a.auc_source.into()).at(Stage::Eval)?),
        None => None,
    };

    let summary = FuseSummary {
        schema: FUSE_SCHEMA,
        input_schema: SCHEMA_VERSION,
        input: a.input.display().to_string(),
        mode: config.mode,
        params: config.params,
        epsilon: config.epsilon,
        max_iterations: config.max_iterations,
        sweep: config.sweep,
        seed: config.seed,
        num_objects: prepared.matrices.num_objects(),
        num_groups: prepared.matrices.num_groups(),
        num_classes: prepared.matrices.num_classes(),
        iterations: result.iterations_used,
        converged: result.converged,
        initial_objective: result.initial_objective,
        objective: result.final_objective(),
        scaling: prepared.diagnostics,
        metrics: metrics.as_ref(),
    };
    let mut trace = Vec::new();
    write_trace_csv(&result.trace, &mut trace).expect("write to memory");
    let dist = distributions_csv(&data.ids, result.distributions.objects.view(), &labels);
    let summary_bytes = json_bytes(&summary).at(Stage::Write)?;

    ensure_dir(&a.out).at(Stage::Write)?;
    let trace_path = a.trace.clone().unwrap_or_else(|| a.out.join("trace.csv"));
    write_atomic(&a.out.join("distributions.csv"), &dist).at(Stage::Write)?;
    write_atomic(&trace_path, &trace).at(Stage::Write)?;
    write_atomic(&a.out.join("summary.json"), &summary_bytes).at(Stage::Write)?;
    log::info!(
        "{} objects, {} iterations, converged = {}",
        summary.num_objects,
        summary.iterations,
        summary.converged
    );
    Ok(())
}

#[derive(Serialize)]
struct EvalOutput<'a> {
    schema: &'static str,
    num_objects: usize,
    #[serde(flatten)]
    report: &'a MetricReport,
}

/// Metrics of `predictions` against `truth`, matched by object id.
pub fn evaluate_files(predictions: &Path, truth: &Path, source: AucSource) -> Result<MetricReport> {
    let pred = read_predictions(predictions)?;
    let truth_rows = read_truth(truth)?;
    let mut by_id: HashMap<&str, usize> = HashMap::with_capacity(truth_rows.len());
    for (id, label) in &truth_rows {
        if by_id.insert(id.as_str(), *label).is_some() {
            return Err(Error::InvalidInput(format!("{}: duplicate object id {id:?}", truth.display())));
        }
    }
    if pred.ids.len() != by_id.len() {
        return Err(Error::InvalidInput(format!(
            "{} predictions against {} truth rows",
            pred.ids.len(),
            by_id.len()
        )));
    }
    let aligned = pred
        .ids
        .iter()
        .map(|id| {
            by_id.get(id.as_str()).copied().ok_or_else(|| {
                Error::InvalidInput(format!("object {id:?} has no truth label in {}", truth.display()))
            })
        })
        .collect::<Result<Vec<usize>>>()?;
    evaluate(pred.scores.view(), &aligned, source)
}

pub fn cmd_eval(a: &EvalArgs) -> CliResult<()> {
    let report = evaluate_files(&a.predictions, &a.truth, a.auc_source.into()).at(Stage::Eval)?;
    let out = EvalOutput {
        schema: METRICS_SCHEMA,
        num_objects: report.support.iter().sum(),
        report: &report,
    };
    let bytes = json_bytes(&out).at(Stage::Write)?;
    if let Some(path) = &a.out {
        write_atomic(path, &bytes).at(Stage::Write)?;
    }
    print!("{}", String::from_utf8_lossy(&bytes));
    Ok(())
}

pub fn cmd_experiment(a: &ExperimentArgs) -> CliResult<()> {
    let kind: ExperimentKind = a.kind.parse().at(Stage::Config)?;
    let value = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e)).at(Stage::Config)?;
            serde_json::from_str(&text)
                .map_err(|e| Error::Parse {
                    path: path.display().to_string(),
                    row: e.line(),
                    message: e.to_string(),
                })
                .at(Stage::Config)?
        }
        None => serde_json::Value::Null,
    };
    let mut config = ExperimentConfig::from_json(kind, value).at(Stage::Config)?;
    config.apply(&Overrides {
        mode: a.mode.map(Into::into),
        params: a.weights.params().at(Stage::Config)?,
        epsilon: a.epsilon,
        seed: a.seed,
    });
    config.validate().at(Stage::Config)?;

    let output = config.run(a.jobs).at(Stage::Experiment)?;
    let report = json_bytes(&output.report).at(Stage::Write)?;
    let timings = json_bytes(&output.timings).at(Stage::Write)?;
    ensure_dir(&a.out).at(Stage::Write)?;
    write_atomic(&a.out.join("report.json"), &report).at(Stage::Write)?;
    write_atomic(&a.out.join("runs.csv"), output.report.runs_csv().as_bytes()).at(Stage::Write)?;
    write_atomic(&a.out.join("timings.json"), &timings).at(Stage::Write)?;
    print!("{}", output.report.table());
    Ok(())
}
