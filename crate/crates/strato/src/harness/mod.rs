//! Experiment orchestration: configs, paired runs, sweeps, rate fits and
//! refinement studies.

pub mod check;
pub mod config;
pub mod fit;
pub mod refine;
pub mod run;
pub mod sweep;

use thiserror::Error;

pub use config::{ExperimentConfig, Preset};
pub use fit::{fit_rate, FitError, RateFitResult};
pub use run::{run_paired, simulate, RunOutcome};
pub use sweep::{run_sweep, simulate_sweep, SweepOutcome, SweepPoint};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Step(#[from] crate::primitive::StepError),
    #[error(transparent)]
    Init(#[from] crate::primitive::InitError),
    #[error(transparent)]
    Hydro(#[from] crate::hydrostatics::HydroError),
    #[error(transparent)]
    Diag(#[from] crate::diagnostics::DiagError),
    #[error(transparent)]
    Helmholtz(#[from] crate::helmholtz::HelmholtzError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Grid(#[from] crate::grid::GridError),
}

impl HarnessError {
    /// Exit code for the command-line tool: 1 for invalid input, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Fit(_) => 1,
            HarnessError::Init(_) => 1,
            _ => 2,
        }
    }
}
