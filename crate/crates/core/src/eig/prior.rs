use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::EigError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PriorDist {
    Uniform { lower: f64, upper: f64 },
    /// `mean + std · ξ` with `ξ` standard normal.
    Normal { mean: f64, std: f64 },
}

/// Independent per-parameter prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PriorSpec {
    dists: Vec<PriorDist>,
}

impl PriorSpec {
    pub fn new(dists: Vec<PriorDist>) -> Result<Self, EigError> {
        if dists.is_empty() {
            return Err(EigError::InvalidPrior("no parameters".into()));
        }
        for (i, d) in dists.iter().enumerate() {
            match *d {
                PriorDist::Uniform { lower, upper } => {
                    if !(lower.is_finite() && upper.is_finite() && lower < upper) {
                        return Err(EigError::InvalidPrior(format!("uniform [{lower}, {upper}] in dimension {i}")));
                    }
                }
                PriorDist::Normal { mean, std } => {
                    if !(mean.is_finite() && std.is_finite() && std > 0.0) {
                        return Err(EigError::InvalidPrior(format!("normal({mean}, {std}) in dimension {i}")));
                    }
                }
            }
        }
        Ok(PriorSpec { dists })
    }

    pub fn uniform_box(bounds: &[(f64, f64)]) -> Result<Self, EigError> {
        PriorSpec::new(bounds.iter().map(|&(lower, upper)| PriorDist::Uniform { lower, upper }).collect())
    }

    pub fn standard_normal(dim: usize) -> Result<Self, EigError> {
        PriorSpec::new(vec![PriorDist::Normal { mean: 0.0, std: 1.0 }; dim])
    }

    pub fn dim(&self) -> usize {
        self.dists.len()
    }

    pub fn dists(&self) -> &[PriorDist] {
        &self.dists
    }

    /// Bounds of an all-uniform prior, `None` otherwise.
    pub fn uniform_bounds(&self) -> Option<Vec<(f64, f64)>> {
        self.dists
            .iter()
            .map(|d| match *d {
                PriorDist::Uniform { lower, upper } => Some((lower, upper)),
                PriorDist::Normal { .. } => None,
            })
            .collect()
    }

    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        for (v, d) in out.iter_mut().zip(&self.dists) {
            *v = match *d {
                PriorDist::Uniform { lower, upper } => lower + (upper - lower) * rng.random::<f64>(),
                PriorDist::Normal { mean, std } => mean + std * rng.sample::<f64, _>(StandardNormal),
            };
        }
    }
}
