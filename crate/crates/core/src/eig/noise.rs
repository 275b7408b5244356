use serde::{Deserialize, Serialize};

use super::EigError;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Per-output Gaussian noise with standard deviation `α_c + β_c |G_c|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    alpha: Vec<f64>,
    beta: Vec<f64>,
}

impl NoiseModel {
    /// Every `α_c` must be positive so that `σ_c > 0` for any finite `G`.
    pub fn new(alpha: Vec<f64>, beta: Vec<f64>) -> Result<Self, EigError> {
        if alpha.len() != beta.len() || alpha.is_empty() {
            return Err(EigError::InvalidNoise(format!(
                "alpha and beta need equal non-zero lengths (got {} and {})",
                alpha.len(),
                beta.len()
            )));
        }
        if let Some(c) = alpha.iter().position(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(EigError::InvalidNoise(format!("alpha[{c}] = {} must be positive", alpha[c])));
        }
        if let Some(c) = beta.iter().position(|b| !(b.is_finite() && *b >= 0.0)) {
            return Err(EigError::InvalidNoise(format!("beta[{c}] = {} must be non-negative", beta[c])));
        }
        Ok(NoiseModel { alpha, beta })
    }

    pub fn uniform(n_outputs: usize, alpha: f64, beta: f64) -> Result<Self, EigError> {
        NoiseModel::new(vec![alpha; n_outputs], vec![beta; n_outputs])
    }

    pub fn n_outputs(&self) -> usize {
        self.alpha.len()
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn is_constant(&self) -> bool {
        self.beta.iter().all(|&b| b == 0.0)
    }

    #[inline]
    pub fn sigma(&self, c: usize, g: f64) -> f64 {
        self.alpha[c] + self.beta[c] * g.abs()
    }

    /// Unchecked `ln f(y | G)`.
    #[inline]
    pub(crate) fn log_likelihood_unchecked(&self, y: &[f64], g: &[f64]) -> f64 {
        let mut s = 0.0;
        for c in 0..y.len() {
            let sigma = self.sigma(c, g[c]);
            let r = (y[c] - g[c]) / sigma;
            s -= LN_SQRT_2PI + sigma.ln() + 0.5 * r * r;
        }
        s
    }
}

/// `Σ_c [ -ln(√(2π) σ_c) - (y_c - G_c)² / (2σ_c²) ]`.
pub fn log_likelihood(y: &[f64], g: &[f64], noise: &NoiseModel) -> Result<f64, EigError> {
    if y.len() != noise.n_outputs() || g.len() != noise.n_outputs() {
        return Err(EigError::SampleMismatch(format!(
            "expected {} outputs, got y: {}, G: {}",
            noise.n_outputs(),
            y.len(),
            g.len()
        )));
    }
    if y.iter().chain(g).any(|v| !v.is_finite()) {
        return Err(EigError::NonFinite("likelihood input".into()));
    }
    Ok(noise.log_likelihood_unchecked(y, g))
}
