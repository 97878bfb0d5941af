//! Synthetic data, built-in base methods and the experiment drivers.

pub mod base;
pub mod experiments;
pub mod inject;
pub mod learners;
pub mod report;
pub mod synthetic;

pub use base::{majority_vote, run_base_methods, BaseRun, Split};
pub use experiments::{ExperimentConfig, ExperimentKind, Overrides};
pub use report::{ExperimentOutput, ExperimentReport, TimingReport};
pub use synthetic::{generate_synthetic, iris_like, Dataset, SyntheticSpec};
