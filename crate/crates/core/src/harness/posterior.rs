use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::eig::NoiseModel;
use crate::models::ForwardModel;
use crate::polychaos::PCExpansion;

/// Posterior density over a 2-D parameter box, on a `k × k` node grid
/// including the box edges. `density[j * k + i]` is the value at
/// `(xs[i], ys[j])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorGrid {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub density: Vec<f64>,
}

fn trapezoid_weights(k: usize, h: f64) -> Vec<f64> {
    (0..k).map(|i| if i == 0 || i == k - 1 { 0.5 * h } else { h }).collect()
}

impl PosteriorGrid {
    pub fn grid_k(&self) -> usize {
        self.xs.len()
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.density[j * self.xs.len() + i]
    }

    /// Trapezoidal integral of `f(x, y) · density`.
    pub fn integrate<F: Fn(f64, f64) -> f64>(&self, f: F) -> f64 {
        let k = self.grid_k();
        let wx = trapezoid_weights(k, self.xs[1] - self.xs[0]);
        let wy = trapezoid_weights(k, self.ys[1] - self.ys[0]);
        let mut s = 0.0;
        for j in 0..k {
            for i in 0..k {
                s += wx[i] * wy[j] * f(self.xs[i], self.ys[j]) * self.at(i, j);
            }
        }
        s
    }

    /// Grid node with the largest density.
    pub fn argmax(&self) -> (usize, usize) {
        let k = self.grid_k();
        let best = (0..self.density.len())
            .fold(0, |b, p| if self.density[p] > self.density[b] { p } else { b });
        (best % k, best / k)
    }
}

/// Posterior of `θ` under a uniform prior on the surrogate's parameter box
/// after observing `y` at design `d`, normalized by the trapezoidal evidence.
pub fn posterior_map(
    surrogate: &PCExpansion,
    noise: &NoiseModel,
    design: &[f64],
    y_observed: &[f64],
    grid_k: usize,
) -> Result<PosteriorGrid, HarnessError> {
    let bounds = surrogate.theta_bounds();
    if bounds.len() != 2 {
        return Err(HarnessError::Config(format!(
            "posterior maps need a 2-dimensional parameter, got {}",
            bounds.len()
        )));
    }
    if grid_k < 2 {
        return Err(HarnessError::Config("grid_k must be at least 2".into()));
    }
    if y_observed.len() != surrogate.n_outputs() || noise.n_outputs() != surrogate.n_outputs() {
        return Err(HarnessError::Config("observation length does not match the surrogate outputs".into()));
    }
    let axis = |(l, u): (f64, f64)| -> Vec<f64> {
        (0..grid_k).map(|i| l + (u - l) * i as f64 / (grid_k - 1) as f64).collect()
    };
    let xs = axis(bounds[0]);
    let ys = axis(bounds[1]);
    let slice = surrogate.at_design(design)?;
    let mut g = vec![0.0; surrogate.n_outputs()];
    let mut log_lik = Vec::with_capacity(grid_k * grid_k);
    for &y in &ys {
        for &x in &xs {
            slice.value_into(&[x, y], &mut g)?;
            log_lik.push(noise.log_likelihood_unchecked(y_observed, &g));
        }
    }
    let max = log_lik.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // the unshifted likelihood would underflow everywhere
    if !max.is_finite() || max < f64::MIN_POSITIVE.ln() {
        return Err(HarnessError::Posterior(format!(
            "likelihood vanishes on the whole grid (largest log-likelihood {max}); data inconsistent with the model"
        )));
    }
    let mut grid = PosteriorGrid {
        xs,
        ys,
        density: log_lik.iter().map(|l| (l - max).exp()).collect(),
    };
    let evidence = grid.integrate(|_, _| 1.0);
    grid.density.iter_mut().for_each(|v| *v /= evidence);
    let total = grid.integrate(|_, _| 1.0);
    assert!((total - 1.0).abs() <= 1e-3, "posterior normalization {total}");
    Ok(grid)
}
