use rand_distr::StandardNormal;

use super::{EigError, PriorSpec};
use crate::seed::rng_from_seed;
use rand::Rng;

/// Frozen prior and noise draws for one nested estimate: `N` outer
/// parameters `θ^(i)`, `N × M` inner parameters `θ̃^(i,j)` and `N` standard
/// normal noise vectors `z^(i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigSampleSet {
    n_outer: usize,
    n_inner: usize,
    n_theta: usize,
    n_outputs: usize,
    thetas_outer: Vec<f64>,
    thetas_inner: Vec<f64>,
    z: Vec<f64>,
    seed: u64,
}

impl EigSampleSet {
    /// Same `(prior, sizes, seed)` gives a bit-identical set.
    pub fn draw(prior: &PriorSpec, n_outputs: usize, n_outer: usize, n_inner: usize, seed: u64) -> Self {
        let n_theta = prior.dim();
        let mut rng = rng_from_seed(seed);
        let mut thetas_outer = vec![0.0; n_outer * n_theta];
        for row in thetas_outer.chunks_exact_mut(n_theta) {
            prior.sample_into(&mut rng, row);
        }
        let mut thetas_inner = vec![0.0; n_outer * n_inner * n_theta];
        for row in thetas_inner.chunks_exact_mut(n_theta) {
            prior.sample_into(&mut rng, row);
        }
        let z = (0..n_outer * n_outputs).map(|_| rng.sample(StandardNormal)).collect();
        EigSampleSet {
            n_outer,
            n_inner,
            n_theta,
            n_outputs,
            thetas_outer,
            thetas_inner,
            z,
            seed,
        }
    }

    /// Assembles a set from explicit row-major blocks.
    pub fn from_parts(
        n_theta: usize,
        n_outputs: usize,
        n_inner: usize,
        thetas_outer: Vec<f64>,
        thetas_inner: Vec<f64>,
        z: Vec<f64>,
        seed: u64,
    ) -> Result<Self, EigError> {
        if n_theta == 0 || n_outputs == 0 || n_inner == 0 || thetas_outer.len() % n_theta != 0 {
            return Err(EigError::SampleMismatch("empty or ragged parameter block".into()));
        }
        let n_outer = thetas_outer.len() / n_theta;
        if n_outer == 0 || thetas_inner.len() != n_outer * n_inner * n_theta || z.len() != n_outer * n_outputs {
            return Err(EigError::SampleMismatch(format!(
                "inconsistent blocks for N = {n_outer}, M = {n_inner}"
            )));
        }
        Ok(EigSampleSet {
            n_outer,
            n_inner,
            n_theta,
            n_outputs,
            thetas_outer,
            thetas_inner,
            z,
            seed,
        })
    }

    pub fn n_outer(&self) -> usize {
        self.n_outer
    }

    pub fn n_inner(&self) -> usize {
        self.n_inner
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    pub fn n_outputs(&self) -> usize {
        self.n_outputs
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn outer(&self, i: usize) -> &[f64] {
        &self.thetas_outer[i * self.n_theta..(i + 1) * self.n_theta]
    }

    pub fn inner(&self, i: usize, j: usize) -> &[f64] {
        let k = (i * self.n_inner + j) * self.n_theta;
        &self.thetas_inner[k..k + self.n_theta]
    }

    pub fn z(&self, i: usize) -> &[f64] {
        &self.z[i * self.n_outputs..(i + 1) * self.n_outputs]
    }

    pub fn thetas_outer(&self) -> &[f64] {
        &self.thetas_outer
    }

    pub fn thetas_inner(&self) -> &[f64] {
        &self.thetas_inner
    }

    pub fn noise(&self) -> &[f64] {
        &self.z
    }
}
