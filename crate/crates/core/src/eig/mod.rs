//! Nested Monte Carlo estimation of expected information gain and its
//! pathwise design gradient, under Gaussian noise `σ_c = α_c + β_c |G_c|`
//! written in the design-independent form `y = G + σ z`.

mod estimator;
mod noise;
mod prior;
mod samples;

pub use estimator::{log_mean_exp, EigEstimator, EigValueAndGrad};
pub use noise::{log_likelihood, NoiseModel};
pub use prior::{PriorDist, PriorSpec};
pub use samples::EigSampleSet;

use crate::models::ModelError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EigError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid noise model: {0}")]
    InvalidNoise(String),
    #[error("invalid prior: {0}")]
    InvalidPrior(String),
    #[error("invalid sample sizes: {0}")]
    InvalidSize(String),
    #[error("design component {dim} = {value} lies outside the design bounds")]
    DesignOutOfBounds { dim: usize, value: f64 },
    #[error("sample set does not fit the estimator: {0}")]
    SampleMismatch(String),
    #[error("non-finite {0}")]
    NonFinite(String),
}
