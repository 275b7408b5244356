//! Maximizers for noisy and frozen information-gain objectives: projected
//! Robbins-Monro stochastic approximation, projected BFGS with backtracking,
//! and the replicated sample-average driver with optimality-gap estimates.

mod bfgs;
mod bounds;
mod drivers;
mod rm;

pub use bfgs::{bfgs_maximize, BfgsOptions, LineSearch};
pub use bounds::Bounds;
pub use drivers::{
    lower_bound_seed, rm_optimize, rm_sample_seed, saa_optimize, saa_sample_seed, GapEstimate, SaaOutcome, SaaReplicate,
};
pub use rm::{robbins_monro, GainSchedule, RmOptions};

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

use crate::eig::EigError;

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("invalid options: {0}")]
    InvalidOptions(String),
    #[error("starting point {0:?} lies outside the bounds")]
    StartOutOfBounds(Vec<f64>),
    #[error("non-finite {what} at iteration {iteration}, x = {x:?}")]
    NonFinite {
        what: &'static str,
        iteration: usize,
        x: Vec<f64>,
    },
    #[error("objective failed at iteration {iteration}: {source}")]
    Objective {
        iteration: usize,
        #[source]
        source: EigError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradientStalled,
    StepStalled,
    PositionStalled,
    MaxIters,
    LineSearchFailed,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::GradientStalled => "gradient_stalled",
            Termination::StepStalled => "step_stalled",
            Termination::PositionStalled => "position_stalled",
            Termination::MaxIters => "max_iters",
            Termination::LineSearchFailed => "line_search_failed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            Termination::GradientStalled,
            Termination::StepStalled,
            Termination::PositionStalled,
            Termination::MaxIters,
            Termination::LineSearchFailed,
        ]
        .into_iter()
        .find(|t| t.as_str() == s)
    }
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// History of one optimizer run.
///
/// `iterations` counts gradient draws for Robbins-Monro and outer iterations
/// for BFGS; line-search evaluations appear only in `n_objective_evals`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationTrace {
    pub iterates: Vec<Vec<f64>>,
    /// Gain `a_k` (Robbins-Monro) or accepted line-search step (BFGS).
    pub step_sizes: Vec<f64>,
    /// Objective at each iterate, when the method evaluates it.
    pub values: Vec<f64>,
    pub termination: Termination,
    pub iterations: usize,
    pub n_objective_evals: usize,
    pub n_gradient_evals: usize,
    /// Curvature updates discarded because the updated matrix failed a
    /// Cholesky check.
    pub n_hessian_resets: usize,
    pub wall_time: f64,
}

impl OptimizationTrace {
    pub fn final_iterate(&self) -> &[f64] {
        self.iterates.last().expect("trace holds the starting point")
    }

    pub fn final_value(&self) -> Option<f64> {
        self.values.last().copied()
    }
}
