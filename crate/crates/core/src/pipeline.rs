//! From raw base-method outputs to the matrices the solver consumes.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::bistochastic::{column_normalize, scale_rectangular, ColumnTargets, ScalingOptions};
use crate::ensemble::{
    build_group_catalog, build_membership, build_votes, EnsembleInput, GroupCatalog,
};
use crate::error::{Error, Result};
use crate::kernel::{CooccurrenceKernel, FactoredKernel, ScalingReport};

/// Which membership weighting feeds `K^m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Membership scaled to unit rows with each group's mass proportional
    /// to its size.
    Ec3,
    /// Membership column-normalized first, then scaled to unit rows and
    /// equal group mass `N / G`.
    #[default]
    Iec3,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Ec3 => "ec3",
            Mode::Iec3 => "iec3",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ec3" => Ok(Mode::Ec3),
            "iec3" => Ok(Mode::Iec3),
            other => Err(Error::InvalidParams(format!(
                "unknown mode {other:?} (expected ec3 or iec3)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineOptions {
    pub scaling: ScalingOptions,
    /// Materialize `K^c` as a dense `N x N` matrix instead of the factored
    /// form. Only sensible for small `N`.
    #[serde(default)]
    pub dense_cooccurrence: bool,
}

/// Inputs of the objective: `K^m` (`N x G`), `K^c` (`N x N`), `Y^o`
/// (`N x l`) and `Y^g` (`G x l`).
#[derive(Debug, Clone)]
pub struct ConsensusMatrices {
    pub km: Array2<f64>,
    pub kc: CooccurrenceKernel,
    pub yo: Array2<f64>,
    pub yg: Array2<f64>,
}

impl ConsensusMatrices {
    pub fn new(
        km: Array2<f64>,
        kc: CooccurrenceKernel,
        yo: Array2<f64>,
        yg: Array2<f64>,
    ) -> Result<Self> {
        let (n, g) = km.dim();
        let l = yo.ncols();
        if kc.len() != n || yo.nrows() != n || yg.nrows() != g || yg.ncols() != l || l == 0 {
            return Err(Error::DimensionMismatch(format!(
                "K^m {:?}, K^c {}x{}, Y^o {:?}, Y^g {:?}",
                km.dim(),
                kc.len(),
                kc.len(),
                yo.dim(),
                yg.dim()
            )));
        }
        Ok(Self { km, kc, yo, yg })
    }

    pub fn num_objects(&self) -> usize {
        self.km.nrows()
    }

    pub fn num_groups(&self) -> usize {
        self.km.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.yo.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingDiagnostics {
    pub membership_residual: f64,
    pub membership_sweeps: usize,
    pub membership_converged: bool,
    pub cooccurrence_residual: f64,
    pub cooccurrence_sweeps: usize,
    pub cooccurrence_converged: bool,
}

#[derive(Debug, Clone)]
pub struct Prepared {
    pub catalog: GroupCatalog,
    pub matrices: ConsensusMatrices,
    pub diagnostics: ScalingDiagnostics,
}

pub fn prepare(input: &EnsembleInput, mode: Mode, opts: PipelineOptions) -> Result<Prepared> {
    let catalog = build_group_catalog(input)?;
    let membership = build_membership(input, &catalog);
    let km = match mode {
        Mode::Ec3 => scale_rectangular(
            membership.as_array(),
            ColumnTargets::Proportional,
            opts.scaling,
        )?,
        Mode::Iec3 => scale_rectangular(
            &column_normalize(membership.as_array())?,
            ColumnTargets::Uniform,
            opts.scaling,
        )?,
    };
    if !km.converged {
        log::warn!(
            "K^m scaling stopped after {} sweeps (residual {:.3e}); group sizes admit no exact \
             solution for the column targets, rows are still stochastic",
            km.sweeps,
            km.residual
        );
    }

    let (kc, report): (CooccurrenceKernel, ScalingReport) = if opts.dense_cooccurrence {
        CooccurrenceKernel::dense_from_catalog(&catalog, opts.scaling)?
    } else {
        let (k, r) = FactoredKernel::from_catalog(&catalog, opts.scaling)?;
        (CooccurrenceKernel::Factored(k), r)
    };
    if !report.converged {
        log::warn!(
            "K^c scaling stopped after {} sweeps (residual {:.3e})",
            report.sweeps,
            report.residual
        );
    }

    let votes = build_votes(input, &catalog);
    let diagnostics = ScalingDiagnostics {
        membership_residual: km.residual,
        membership_sweeps: km.sweeps,
        membership_converged: km.converged,
        cooccurrence_residual: report.residual,
        cooccurrence_sweeps: report.sweeps,
        cooccurrence_converged: report.converged,
    };
    let matrices = ConsensusMatrices::new(km.matrix, kc, votes.objects, votes.groups)?;
    Ok(Prepared {
        catalog,
        matrices,
        diagnostics,
    })
}
