//! Consensus fusion of base classifier and base clustering outputs.
//!
//! Objects and the groups produced by every base method (predicted classes
//! and clusters) form a bipartite graph. Class distributions for both sides
//! are found by minimizing a convex quadratic that ties objects to their
//! groups, smooths over objects that co-occur often, and stays close to the
//! classifiers' votes.
//!
//! ```no_run
//! use ec3_core::{fuse, EnsembleInput, FuseOptions};
//!
//! let input = EnsembleInput::new(
//!     2,
//!     vec![vec![1, 1, 2, 2], vec![1, 2, 2, 2]],
//!     vec![vec![0, 0, 1, 1]],
//!     None,
//! )?;
//! let out = fuse(&input, &FuseOptions::default())?;
//! println!("{:?}", out.result.labels());
//! # Ok::<(), ec3_core::Error>(())
//! ```

pub mod bistochastic;
pub mod cli;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod harness;
pub mod io;
pub mod kernel;
pub mod objective;
pub mod pipeline;
pub mod profiles;
pub mod solver;

pub use bistochastic::{
    kl_bistochastic_rectangular, kl_bistochastic_square, BistochasticMatrix, ScalingOptions,
};
pub use ensemble::{
    build_cooccurrence, build_group_catalog, build_membership, build_votes, EnsembleInput,
    GroupCatalog, MembershipMatrix, CooccurrenceMatrix, VoteMatrices,
};
pub use error::{Error, ErrorKind, Result};
pub use eval::{auc, f_score, nmi, MetricReport};
pub use kernel::CooccurrenceKernel;
pub use objective::{eval_objective, laplacian, ClassDistributions, Components, ObjectiveParams};
pub use pipeline::{prepare, ConsensusMatrices, Mode, PipelineOptions, Prepared};
pub use solver::{
    init_distributions, predict_labels, solve, update_groups, update_objects, SolverConfig,
    SolverResult, Sweep,
};

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FuseOptions {
    pub solver: SolverConfig,
    pub pipeline: PipelineOptions,
}

#[derive(Debug, Clone)]
pub struct Fused {
    pub prepared: Prepared,
    pub result: SolverResult,
}

/// Builds the matrices for `options.solver.mode` and runs the solver.
pub fn fuse(input: &EnsembleInput, options: &FuseOptions) -> Result<Fused> {
    options.solver.validate()?;
    let prepared = prepare(input, options.solver.mode, options.pipeline)?;
    let result = solve(&prepared.matrices, &options.solver)?;
    Ok(Fused { prepared, result })
}
