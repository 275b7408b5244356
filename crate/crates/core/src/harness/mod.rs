//! End-to-end studies: surrogate construction and checking, the
//! `N × M × algorithm` experiment matrix, posterior maps and report files.

mod experiment;
mod posterior;
mod reports;
mod surrogate;

pub use experiment::{
    cell_seed, mse_of_cell, requality_seed, run_matrix, Algorithm, CellResult, ExperimentConfig,
    ExperimentMatrixResult, ExperimentSetup, FailureRecord, ModelChoice, ReplicateRecord, RmSettings, SaaSettings,
};
pub use posterior::{posterior_map, PosteriorGrid};
pub use reports::{emit_reports, read_reports, REPORT_FILES};
pub use surrogate::{
    benchmark_estimator, benchmark_noise, build_diffusion_surrogate, check_surrogate, BuildReport, QuadratureSpec,
    SurrogateCheck, SurrogateSpec,
};

use crate::eig::EigError;
use crate::models::ModelError;
use crate::optim::OptimError;
use crate::polychaos::PceError;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Pce(#[from] PceError),
    #[error(transparent)]
    Eig(#[from] EigError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{0}")]
    Posterior(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
}
