use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::Arc;

use super::HarnessError;
use crate::eig::{EigEstimator, NoiseModel, PriorSpec};
use crate::models::{DiffusionConfig, DiffusionModel, FieldHistory, ForwardModel};
use crate::optim::Bounds;
use crate::polychaos::{
    project, smolyak_quadrature, tensor_quadrature, total_order_index_set, AffineMap, PCExpansion, QuadratureRule,
};
use crate::seed::rng_from_seed;
use rand::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QuadratureSpec {
    Tensor { levels: Vec<u32> },
    Smolyak { level: u32 },
}

impl QuadratureSpec {
    pub fn rule(&self, dim: usize) -> Result<QuadratureRule, HarnessError> {
        Ok(match self {
            QuadratureSpec::Tensor { levels } => {
                if levels.len() != dim {
                    return Err(HarnessError::Config(format!(
                        "tensor quadrature needs {dim} levels, got {}",
                        levels.len()
                    )));
                }
                tensor_quadrature(levels)?
            }
            QuadratureSpec::Smolyak { level } => smolyak_quadrature(dim, *level)?,
        })
    }
}

/// Surrogate of the diffusion benchmark over `θ = x_src ∈ [0,1]²` and
/// `d = x_sensor ∈ [0,1]²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurrogateSpec {
    pub degree: u32,
    pub quadrature: QuadratureSpec,
    pub model: DiffusionConfig,
    pub log_space: bool,
}

impl Default for SurrogateSpec {
    /// Degree 4 on the level-3 Clenshaw-Curtis tensor grid: 9⁴ = 6561 model
    /// evaluations, which need only 81 distinct PDE solves.
    fn default() -> Self {
        SurrogateSpec {
            degree: 4,
            quadrature: QuadratureSpec::Tensor { levels: vec![3; 4] },
            model: DiffusionConfig::default(),
            log_space: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildReport {
    pub model_evaluations: usize,
    pub pde_solves: usize,
    pub terms: usize,
}

fn unit_maps(dim: usize) -> Vec<AffineMap> {
    vec![AffineMap::from_interval(0.0, 1.0).expect("unit interval"); dim]
}

fn key(theta: &[f64]) -> [u64; 2] {
    [theta[0].to_bits(), theta[1].to_bits()]
}

/// Projects the diffusion model onto a total-order Legendre basis. Every
/// distinct source location among the quadrature nodes is solved once and
/// observed at all of its sensor locations.
pub fn build_diffusion_surrogate(spec: &SurrogateSpec) -> Result<(PCExpansion, BuildReport), HarnessError> {
    let model = DiffusionModel::new(spec.model.clone())?;
    let index_set = total_order_index_set(4, spec.degree)?;
    let rule = spec.quadrature.rule(4)?;
    let maps = unit_maps(4);

    let mut sources: Vec<[f64; 2]> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for node in rule.nodes() {
        let theta = [maps[0].to_physical(node[0]), maps[1].to_physical(node[1])];
        if seen.insert(key(&theta)) {
            sources.push(theta);
        }
    }
    let solved: Vec<Result<FieldHistory, _>> =
        sources.par_iter().map(|&s| model.solve_observation_times(s)).collect();
    let mut histories = HashMap::with_capacity(sources.len());
    for (s, h) in sources.iter().zip(solved) {
        histories.insert(key(s), h?);
    }

    let n_y = model.n_outputs();
    let expansion = project(
        |theta, design| {
            let h = &histories[&key(theta)];
            model
                .observe(h, [design[0], design[1]])
                .unwrap_or_else(|_| vec![f64::NAN; n_y])
        },
        &index_set,
        &rule,
        &maps,
        2,
        spec.log_space,
    )?;
    let report = BuildReport {
        model_evaluations: rule.len(),
        pde_solves: sources.len(),
        terms: index_set.len(),
    };
    Ok((expansion, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateCheck {
    pub samples: usize,
    /// `‖G - Ĝ‖₂ / ‖G‖₂` pooled over every output and sample.
    pub relative_l2: f64,
    pub per_output: Vec<f64>,
    pub max_abs_error: f64,
}

/// Relative L² error of a surrogate against direct solves at `samples`
/// points drawn uniformly over the joint box.
pub fn check_surrogate(
    expansion: &PCExpansion,
    model: &dyn ForwardModel,
    samples: usize,
    seed: u64,
) -> Result<SurrogateCheck, HarnessError> {
    let n_theta = model.n_theta();
    let n_y = model.n_outputs();
    let mut bounds = expansion.theta_bounds();
    bounds.extend(expansion.design_bounds());
    let mut rng = rng_from_seed(seed);
    let points: Vec<Vec<f64>> = (0..samples)
        .map(|_| bounds.iter().map(|(l, u)| l + (u - l) * rng.random::<f64>()).collect())
        .collect();
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = points
        .par_iter()
        .map(|p| -> Result<_, HarnessError> {
            let truth = model.value(&p[..n_theta], &p[n_theta..])?;
            let approx = expansion.evaluate(&p[..n_theta], &p[n_theta..])?;
            Ok((truth, approx))
        })
        .collect::<Result<_, _>>()?;
    let mut num = vec![0.0; n_y];
    let mut den = vec![0.0; n_y];
    let mut max_abs: f64 = 0.0;
    for (t, a) in &pairs {
        for c in 0..n_y {
            let e = t[c] - a[c];
            num[c] += e * e;
            den[c] += t[c] * t[c];
            max_abs = max_abs.max(e.abs());
        }
    }
    let pooled = (num.iter().sum::<f64>() / den.iter().sum::<f64>()).sqrt();
    Ok(SurrogateCheck {
        samples,
        relative_l2: pooled,
        per_output: num.iter().zip(&den).map(|(n, d)| (n / d).sqrt()).collect(),
        max_abs_error: max_abs,
    })
}

/// Noise of the benchmark: `σ_c = 0.1 + 0.1 |G_c|`.
pub fn benchmark_noise(n_outputs: usize) -> NoiseModel {
    NoiseModel::uniform(n_outputs, 0.1, 0.1).expect("positive floor")
}

/// Estimator for a surrogate of the benchmark: uniform prior over the
/// surrogate's parameter box, design bounds from its design box.
pub fn benchmark_estimator(surrogate: Arc<PCExpansion>, n: usize, m: usize) -> Result<EigEstimator, HarnessError> {
    let prior = PriorSpec::uniform_box(&surrogate.theta_bounds())?;
    let bounds = Bounds::from_pairs(&surrogate.design_bounds())?;
    let noise = benchmark_noise(surrogate.n_outputs());
    Ok(EigEstimator::new(surrogate, noise, prior, n, m, bounds)?)
}
