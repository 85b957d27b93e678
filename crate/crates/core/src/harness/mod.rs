//! Run configuration, single runs, convergence sweeps and report output.

pub mod config;
pub mod run;
pub mod sweep;
pub mod tables;

use std::path::Path;

use thiserror::Error;

use crate::assembly::AssemblyError;
use crate::mesh::MeshError;
use crate::problems::ProblemError;
use crate::solver::SolverError;
use crate::timestepping::TimeError;

pub use config::{ConfigError, ControlMode, RunConfig, Startup, Stepping};
pub use run::{error_norm, run_case, RunSummary, TraceRow};
pub use sweep::{convergence_sweep, ConvergenceReport, Sweep, SweepRow};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Time(#[from] TimeError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Operator(#[from] crate::operators::OperatorError),
    #[error("initial solution has zero norm")]
    ZeroNormalization,
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl RunError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        RunError::Io { path: path.display().to_string(), source }
    }

    /// Process exit code: 2 for solver failures, 3 for configuration errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::Problem(_) => 3,
            RunError::Solver(_) | RunError::Time(TimeError::Solver(_)) => 2,
            _ => 1,
        }
    }
}
