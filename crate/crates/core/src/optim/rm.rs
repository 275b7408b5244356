use serde::{Deserialize, Serialize};
use std::time::Instant;

use super::{Bounds, OptimError, OptimizationTrace, Termination};
use crate::eig::EigError;

/// Harmonic gains `a_k = β / k`, `k ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainSchedule {
    pub beta: f64,
}

impl GainSchedule {
    pub fn harmonic(beta: f64) -> Result<Self, OptimError> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(OptimError::InvalidOptions(format!("gain scale must be positive, got {beta}")));
        }
        Ok(GainSchedule { beta })
    }

    pub fn gain(&self, k: usize) -> f64 {
        self.beta / k as f64
    }
}

impl Default for GainSchedule {
    fn default() -> Self {
        GainSchedule { beta: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmOptions {
    pub gain: GainSchedule,
    pub max_iters: usize,
    pub stall_tol: f64,
    pub stall_patience: usize,
    pub bounds: Bounds,
}

impl RmOptions {
    pub fn new(bounds: Bounds) -> Self {
        RmOptions {
            gain: GainSchedule::default(),
            max_iters: 50,
            stall_tol: 1e-4,
            stall_patience: 5,
            bounds,
        }
    }

    pub fn validate(&self) -> Result<(), OptimError> {
        GainSchedule::harmonic(self.gain.beta)?;
        if self.max_iters == 0 || self.stall_patience == 0 || !(self.stall_tol > 0.0) {
            return Err(OptimError::InvalidOptions(
                "max_iters and stall_patience must be at least 1, stall_tol positive".into(),
            ));
        }
        Ok(())
    }
}

/// Projected stochastic ascent `x_{k+1} = Π(x_k + a_k ĝ(x_k))`.
///
/// `grad_fn(x, k)` returns a gradient estimate at iteration `k` (1-based),
/// drawing whatever fresh randomness it needs. The run stops when the step
/// norm stays below `stall_tol` for `stall_patience` consecutive iterations,
/// or after `max_iters` gradient draws.
pub fn robbins_monro<F>(mut grad_fn: F, x0: &[f64], opts: &RmOptions) -> Result<OptimizationTrace, OptimError>
where
    F: FnMut(&[f64], usize) -> Result<Vec<f64>, EigError>,
{
    opts.validate()?;
    if !opts.bounds.contains(x0) {
        return Err(OptimError::StartOutOfBounds(x0.to_vec()));
    }
    let start = Instant::now();
    let mut x = x0.to_vec();
    let mut iterates = vec![x.clone()];
    let mut step_sizes = Vec::new();
    let mut stalled = 0;
    let mut termination = Termination::MaxIters;
    let mut k = 0;
    while k < opts.max_iters {
        k += 1;
        let g = grad_fn(&x, k).map_err(|source| OptimError::Objective { iteration: k, source })?;
        if g.len() != x.len() || g.iter().any(|v| !v.is_finite()) {
            return Err(OptimError::NonFinite {
                what: "gradient",
                iteration: k,
                x,
            });
        }
        let a = opts.gain.gain(k);
        let mut next: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi + a * gi).collect();
        opts.bounds.project(&mut next);
        let moved = next.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        x = next;
        iterates.push(x.clone());
        step_sizes.push(a);
        if moved < opts.stall_tol {
            stalled += 1;
            if stalled >= opts.stall_patience {
                termination = Termination::PositionStalled;
                break;
            }
        } else {
            stalled = 0;
        }
    }
    Ok(OptimizationTrace {
        iterates,
        step_sizes,
        values: Vec::new(),
        termination,
        iterations: k,
        n_objective_evals: 0,
        n_gradient_evals: k,
        n_hessian_resets: 0,
        wall_time: start.elapsed().as_secs_f64(),
    })
}
