use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{bfgs_maximize, robbins_monro, BfgsOptions, OptimError, OptimizationTrace, RmOptions};
use crate::eig::{EigEstimator, EigSampleSet};
use crate::seed::{derive_seed, rng_from_seed};

const TAG_START: u64 = 1;
const TAG_OPTIMIZE: u64 = 2;
const TAG_LOWER: u64 = 3;

/// Optimality-gap estimate for one replicate, maximization orientation:
/// `upper` is the mean of the replicate optima and `lower` an independent
/// larger-sample estimate at this replicate's design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapEstimate {
    pub t: usize,
    pub upper: f64,
    pub lower: f64,
    pub gap: f64,
    pub variance: f64,
}

#[derive(Debug, Clone)]
pub struct SaaReplicate {
    pub t: usize,
    pub trace: OptimizationTrace,
    /// `h_N(x̂_t)`, the frozen-sample objective at the returned design.
    pub optimum: f64,
    pub lower: f64,
    /// Sample variance of the lower-bound terms divided by `N'`.
    pub lower_variance: f64,
}

#[derive(Debug)]
pub struct SaaOutcome {
    pub replicates: Vec<SaaReplicate>,
    pub failures: Vec<(usize, OptimError)>,
    pub gaps: Vec<GapEstimate>,
    /// `h̄_N`; NaN when every replicate failed.
    pub upper: f64,
}

fn sample_variance(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64
}

fn start_point(estimator: &EigEstimator, seed: u64, t: usize) -> Vec<f64> {
    let mut rng = rng_from_seed(derive_seed(seed, &[t as u64, TAG_START]));
    estimator.design_bounds().sample_uniform(&mut rng)
}

/// Seed of the frozen set for SAA replicate `t`.
pub fn saa_sample_seed(seed: u64, t: usize) -> u64 {
    derive_seed(seed, &[t as u64, TAG_OPTIMIZE])
}

/// Seed of the fresh set drawn at Robbins-Monro iteration `k` of run `t`.
pub fn rm_sample_seed(seed: u64, t: usize, k: usize) -> u64 {
    derive_seed(seed, &[t as u64, TAG_OPTIMIZE, k as u64])
}

/// Seed of the lower-bound set for SAA replicate `t`.
pub fn lower_bound_seed(seed: u64, t: usize) -> u64 {
    derive_seed(seed, &[t as u64, TAG_LOWER])
}

/// `T` replicated sample-average runs with gap estimates.
///
/// Replicate `t` freezes a sample set drawn from `(seed, t)`, maximizes it by
/// BFGS from a start drawn uniformly over the design box, then re-estimates
/// the returned design with `n_prime` outer samples and the same `M`.
/// A failing replicate is recorded and the rest continue.
pub fn saa_optimize(
    estimator: &EigEstimator,
    t_runs: usize,
    n_prime: usize,
    opts: &BfgsOptions,
    seed: u64,
) -> Result<SaaOutcome, OptimError> {
    if t_runs == 0 {
        return Err(OptimError::InvalidOptions("at least one replicate is required".into()));
    }
    if n_prime <= estimator.n_outer() {
        return Err(OptimError::InvalidOptions(format!(
            "N' = {n_prime} must exceed N = {}",
            estimator.n_outer()
        )));
    }
    opts.validate()?;
    let lower_est = estimator
        .with_sizes(n_prime, estimator.n_inner())
        .map_err(|e| OptimError::InvalidOptions(e.to_string()))?;

    let runs: Vec<Result<SaaReplicate, OptimError>> = (0..t_runs)
        .into_par_iter()
        .map(|t| {
            let x0 = start_point(estimator, seed, t);
            let samples = estimator.draw_sample_set(saa_sample_seed(seed, t));
            let trace = bfgs_maximize(
                |x| estimator.eig_gradient(x, &samples).map(|r| (r.value, r.gradient)),
                &x0,
                opts,
            )?;
            let optimum = trace.final_value().expect("BFGS records values");
            let lower_set: EigSampleSet = lower_est.draw_sample_set(lower_bound_seed(seed, t));
            let terms = lower_est
                .eig_value_terms(trace.final_iterate(), &lower_set)
                .map_err(|source| OptimError::Objective {
                    iteration: trace.iterations,
                    source,
                })?;
            let lower = terms.iter().sum::<f64>() / terms.len() as f64;
            Ok(SaaReplicate {
                t,
                trace,
                optimum,
                lower,
                lower_variance: sample_variance(&terms) / n_prime as f64,
            })
        })
        .collect();

    let mut replicates = Vec::new();
    let mut failures = Vec::new();
    for (t, r) in runs.into_iter().enumerate() {
        match r {
            Ok(rep) => replicates.push(rep),
            Err(e) => failures.push((t, e)),
        }
    }
    let optima: Vec<f64> = replicates.iter().map(|r| r.optimum).collect();
    let upper = optima.iter().sum::<f64>() / optima.len() as f64;
    let upper_variance = sample_variance(&optima) / optima.len().max(1) as f64;
    let gaps = replicates
        .iter()
        .map(|r| GapEstimate {
            t: r.t,
            upper,
            lower: r.lower,
            gap: upper - r.lower,
            variance: upper_variance + r.lower_variance,
        })
        .collect();
    Ok(SaaOutcome {
        replicates,
        failures,
        gaps,
        upper,
    })
}

/// `T` independent Robbins-Monro runs; every iteration draws a fresh sample
/// set from `(seed, t, k)` and steps along its gradient estimate.
pub fn rm_optimize(
    estimator: &EigEstimator,
    t_runs: usize,
    opts: &RmOptions,
    seed: u64,
) -> Result<Vec<Result<OptimizationTrace, OptimError>>, OptimError> {
    if t_runs == 0 {
        return Err(OptimError::InvalidOptions("at least one run is required".into()));
    }
    opts.validate()?;
    Ok((0..t_runs)
        .into_par_iter()
        .map(|t| {
            let x0 = start_point(estimator, seed, t);
            robbins_monro(
                |x, k| {
                    let samples = estimator.draw_sample_set(rm_sample_seed(seed, t, k));
                    estimator.eig_gradient(x, &samples).map(|r| r.gradient)
                },
                &x0,
                opts,
            )
        })
        .collect())
}
