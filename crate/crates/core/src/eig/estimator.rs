use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

use super::{EigError, EigSampleSet, NoiseModel, PriorSpec};
use crate::models::{DesignSlice, ForwardModel};
use crate::optim::Bounds;

/// Estimate of `Û_{N,M}(d)` in nats with its design gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigValueAndGrad {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub n_model_evals: u64,
}

/// Binds a forward model, noise model, prior and sample sizes.
#[derive(Clone)]
pub struct EigEstimator {
    model: Arc<dyn ForwardModel>,
    noise: NoiseModel,
    prior: PriorSpec,
    n_outer: usize,
    n_inner: usize,
    design_bounds: Bounds,
}

impl std::fmt::Debug for EigEstimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EigEstimator")
            .field("noise", &self.noise)
            .field("prior", &self.prior)
            .field("n_outer", &self.n_outer)
            .field("n_inner", &self.n_inner)
            .field("design_bounds", &self.design_bounds)
            .finish_non_exhaustive()
    }
}

/// `ln( (1/M) Σ_j exp(v_j) )`, shifted by the maximum.
pub fn log_mean_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let s: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + (s / values.len() as f64).ln()
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[derive(Clone, Copy, PartialEq)]
enum GradPath {
    Full,
    ConstantNoise,
}

impl EigEstimator {
    pub fn new(
        model: Arc<dyn ForwardModel>,
        noise: NoiseModel,
        prior: PriorSpec,
        n_outer: usize,
        n_inner: usize,
        design_bounds: Bounds,
    ) -> Result<Self, EigError> {
        if n_outer == 0 || n_inner == 0 {
            return Err(EigError::InvalidSize(format!("N = {n_outer}, M = {n_inner}; both must be at least 1")));
        }
        if prior.dim() != model.n_theta() {
            return Err(EigError::InvalidPrior(format!(
                "prior has {} dimensions, model expects {}",
                prior.dim(),
                model.n_theta()
            )));
        }
        if noise.n_outputs() != model.n_outputs() {
            return Err(EigError::InvalidNoise(format!(
                "noise has {} outputs, model has {}",
                noise.n_outputs(),
                model.n_outputs()
            )));
        }
        if design_bounds.dim() != model.n_design() {
            return Err(EigError::SampleMismatch(format!(
                "design bounds have {} dimensions, model expects {}",
                design_bounds.dim(),
                model.n_design()
            )));
        }
        Ok(EigEstimator {
            model,
            noise,
            prior,
            n_outer,
            n_inner,
            design_bounds,
        })
    }

    /// Same model, noise and prior with other sample sizes.
    pub fn with_sizes(&self, n_outer: usize, n_inner: usize) -> Result<Self, EigError> {
        EigEstimator::new(
            self.model.clone(),
            self.noise.clone(),
            self.prior.clone(),
            n_outer,
            n_inner,
            self.design_bounds.clone(),
        )
    }

    pub fn model(&self) -> &Arc<dyn ForwardModel> {
        &self.model
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    pub fn prior(&self) -> &PriorSpec {
        &self.prior
    }

    pub fn n_outer(&self) -> usize {
        self.n_outer
    }

    pub fn n_inner(&self) -> usize {
        self.n_inner
    }

    pub fn design_bounds(&self) -> &Bounds {
        &self.design_bounds
    }

    pub fn draw_sample_set(&self, seed: u64) -> EigSampleSet {
        EigSampleSet::draw(&self.prior, self.model.n_outputs(), self.n_outer, self.n_inner, seed)
    }

    fn check_design(&self, design: &[f64]) -> Result<(), EigError> {
        if design.len() != self.design_bounds.dim() {
            return Err(EigError::SampleMismatch(format!(
                "design has {} components, expected {}",
                design.len(),
                self.design_bounds.dim()
            )));
        }
        for (dim, &value) in design.iter().enumerate() {
            if !(value >= self.design_bounds.lower()[dim] && value <= self.design_bounds.upper()[dim]) {
                return Err(EigError::DesignOutOfBounds { dim, value });
            }
        }
        Ok(())
    }

    fn check_samples(&self, samples: &EigSampleSet) -> Result<(), EigError> {
        if samples.n_theta() != self.model.n_theta() || samples.n_outputs() != self.model.n_outputs() {
            return Err(EigError::SampleMismatch(format!(
                "set has n_theta = {}, n_y = {}; model has {}, {}",
                samples.n_theta(),
                samples.n_outputs(),
                self.model.n_theta(),
                self.model.n_outputs()
            )));
        }
        Ok(())
    }

    fn evaluate(slice: &dyn DesignSlice, theta: &[f64], out: &mut [f64]) -> Result<(), EigError> {
        slice.value_into(theta, out)?;
        if out.iter().any(|v| !v.is_finite()) {
            return Err(EigError::NonFinite(format!("model output at theta = {theta:?}")));
        }
        Ok(())
    }

    fn evaluate_with_jacobian(
        slice: &dyn DesignSlice,
        theta: &[f64],
        out: &mut [f64],
        jac: &mut [f64],
    ) -> Result<(), EigError> {
        slice.value_and_jacobian_into(theta, out, jac)?;
        if out.iter().chain(jac.iter()).any(|v| !v.is_finite()) {
            return Err(EigError::NonFinite(format!("model output or gradient at theta = {theta:?}")));
        }
        Ok(())
    }

    /// Data `y = G + σ(G) z`.
    #[inline]
    fn synthesize(&self, g: &[f64], z: &[f64], y: &mut [f64]) {
        for c in 0..g.len() {
            y[c] = g[c] + self.noise.sigma(c, g[c]) * z[c];
        }
    }

    /// Per-outer-sample terms
    /// `ln f(y_i | θ_i) - ln( (1/M) Σ_j f(y_i | θ̃_ij) )`; their mean is `Û_{N,M}`.
    pub fn eig_value_terms(&self, design: &[f64], samples: &EigSampleSet) -> Result<Vec<f64>, EigError> {
        self.check_design(design)?;
        self.check_samples(samples)?;
        let slice = self.model.at_design(design)?;
        let slice: &dyn DesignSlice = slice.as_ref();
        let n_y = self.model.n_outputs();
        (0..samples.n_outer())
            .into_par_iter()
            .map_init(
                || (vec![0.0; n_y], vec![0.0; n_y], vec![0.0; n_y], vec![0.0; samples.n_inner()]),
                |(g, y, gj, ll), i| {
                    Self::evaluate(slice, samples.outer(i), g)?;
                    self.synthesize(g, samples.z(i), y);
                    let outer = self.noise.log_likelihood_unchecked(y, g);
                    for (j, l) in ll.iter_mut().enumerate() {
                        Self::evaluate(slice, samples.inner(i, j), gj)?;
                        *l = self.noise.log_likelihood_unchecked(y, gj);
                    }
                    Ok(outer - log_mean_exp(ll))
                },
            )
            .collect()
    }

    /// `Û_{N,M}(d)` on a frozen sample set.
    pub fn eig_value(&self, design: &[f64], samples: &EigSampleSet) -> Result<f64, EigError> {
        let terms = self.eig_value_terms(design, samples)?;
        Ok(mean(&terms))
    }

    /// Draws a sample set from `seed` and evaluates `Û_{N,M}(d)`.
    pub fn eig_value_fresh(&self, design: &[f64], seed: u64) -> Result<f64, EigError> {
        self.eig_value(design, &self.draw_sample_set(seed))
    }

    /// Estimator with the outer data supplied directly (row-major `N × n_y`)
    /// instead of synthesized from the set's noise draws.
    pub fn eig_value_with_data(&self, design: &[f64], samples: &EigSampleSet, data: &[f64]) -> Result<f64, EigError> {
        self.check_design(design)?;
        self.check_samples(samples)?;
        let n_y = self.model.n_outputs();
        if data.len() != samples.n_outer() * n_y {
            return Err(EigError::SampleMismatch(format!(
                "data has {} entries, expected {}",
                data.len(),
                samples.n_outer() * n_y
            )));
        }
        let slice = self.model.at_design(design)?;
        let slice: &dyn DesignSlice = slice.as_ref();
        let terms: Vec<f64> = (0..samples.n_outer())
            .into_par_iter()
            .map_init(
                || (vec![0.0; n_y], vec![0.0; n_y], vec![0.0; samples.n_inner()]),
                |(g, gj, ll), i| {
                    let y = &data[i * n_y..(i + 1) * n_y];
                    Self::evaluate(slice, samples.outer(i), g)?;
                    let outer = self.noise.log_likelihood_unchecked(y, g);
                    for (j, l) in ll.iter_mut().enumerate() {
                        Self::evaluate(slice, samples.inner(i, j), gj)?;
                        *l = self.noise.log_likelihood_unchecked(y, gj);
                    }
                    Ok(outer - log_mean_exp(ll))
                },
            )
            .collect::<Result<_, EigError>>()?;
        Ok(mean(&terms))
    }

    /// `Û_{N,M}(d)` and its pathwise gradient on a frozen sample set.
    pub fn eig_gradient(&self, design: &[f64], samples: &EigSampleSet) -> Result<EigValueAndGrad, EigError> {
        self.gradient_impl(design, samples, GradPath::Full)
    }

    /// Gradient using the reduced expressions valid when every `β_c = 0`.
    pub fn eig_gradient_constant_noise(
        &self,
        design: &[f64],
        samples: &EigSampleSet,
    ) -> Result<EigValueAndGrad, EigError> {
        if !self.noise.is_constant() {
            return Err(EigError::InvalidNoise("reduced gradient needs beta = 0".into()));
        }
        self.gradient_impl(design, samples, GradPath::ConstantNoise)
    }

    fn gradient_impl(&self, design: &[f64], samples: &EigSampleSet, path: GradPath) -> Result<EigValueAndGrad, EigError> {
        self.check_design(design)?;
        self.check_samples(samples)?;
        if !self.model.has_design_gradient() {
            return Err(crate::models::ModelError::NoDesignGradient.into());
        }
        let slice = self.model.at_design(design)?;
        let slice: &dyn DesignSlice = slice.as_ref();
        let n_y = self.model.n_outputs();
        let n_d = self.model.n_design();
        let m = samples.n_inner();
        let alpha = self.noise.alpha();
        let beta = self.noise.beta();

        struct Scratch {
            g: Vec<f64>,
            y: Vec<f64>,
            gj: Vec<f64>,
            jac_i: Vec<f64>,
            dy: Vec<f64>,
            jac: Vec<f64>,
            ll: Vec<f64>,
            dll: Vec<f64>,
        }

        let per_outer: Vec<(f64, Vec<f64>)> = (0..samples.n_outer())
            .into_par_iter()
            .map_init(
                || Scratch {
                    g: vec![0.0; n_y],
                    y: vec![0.0; n_y],
                    gj: vec![0.0; n_y],
                    jac_i: vec![0.0; n_y * n_d],
                    dy: vec![0.0; n_y * n_d],
                    jac: vec![0.0; m * n_y * n_d],
                    ll: vec![0.0; m],
                    dll: vec![0.0; m * n_d],
                },
                |s, i| {
                    let z = samples.z(i);
                    Self::evaluate_with_jacobian(slice, samples.outer(i), &mut s.g, &mut s.jac_i)?;
                    self.synthesize(&s.g, z, &mut s.y);
                    let outer = self.noise.log_likelihood_unchecked(&s.y, &s.g);

                    let mut grad = vec![0.0; n_d];
                    // d y_c / d d_a
                    for c in 0..n_y {
                        let sg = sign(s.g[c]);
                        let sigma = self.noise.sigma(c, s.g[c]);
                        for a in 0..n_d {
                            let dg = s.jac_i[c * n_d + a];
                            s.dy[c * n_d + a] = dg * (1.0 + beta[c] * sg * z[c]);
                            if path == GradPath::Full {
                                grad[a] -= beta[c] * sg * dg / sigma;
                            }
                        }
                    }

                    for j in 0..m {
                        let jac = &mut s.jac[j * n_y * n_d..(j + 1) * n_y * n_d];
                        Self::evaluate_with_jacobian(slice, samples.inner(i, j), &mut s.gj, jac)?;
                        s.ll[j] = self.noise.log_likelihood_unchecked(&s.y, &s.gj);
                        let dl = &mut s.dll[j * n_d..(j + 1) * n_d];
                        dl.iter_mut().for_each(|v| *v = 0.0);
                        for c in 0..n_y {
                            let r = s.y[c] - s.gj[c];
                            match path {
                                GradPath::Full => {
                                    let sg = sign(s.gj[c]);
                                    let sigma = self.noise.sigma(c, s.gj[c]);
                                    let s2 = sigma * sigma;
                                    for a in 0..n_d {
                                        let dg = jac[c * n_d + a];
                                        let dsigma = beta[c] * sg * dg;
                                        dl[a] += -dsigma / sigma - r / s2 * (s.dy[c * n_d + a] - dg)
                                            + r * r * dsigma / (s2 * sigma);
                                    }
                                }
                                GradPath::ConstantNoise => {
                                    let a2 = alpha[c] * alpha[c];
                                    for a in 0..n_d {
                                        dl[a] -= r / a2 * (s.jac_i[c * n_d + a] - jac[c * n_d + a]);
                                    }
                                }
                            }
                        }
                    }
                    let value = outer - log_mean_exp(&s.ll);

                    // softmax-weighted inner derivative
                    let max = s.ll.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let mut wsum = 0.0;
                    let mut inner = vec![0.0; n_d];
                    for j in 0..m {
                        let w = (s.ll[j] - max).exp();
                        wsum += w;
                        for a in 0..n_d {
                            inner[a] += w * s.dll[j * n_d + a];
                        }
                    }
                    for a in 0..n_d {
                        grad[a] -= inner[a] / wsum;
                    }
                    Ok((value, grad))
                },
            )
            .collect::<Result<_, EigError>>()?;

        let n = per_outer.len() as f64;
        let values: Vec<f64> = per_outer.iter().map(|p| p.0).collect();
        let mut gradient = vec![0.0; n_d];
        for (_, g) in &per_outer {
            for a in 0..n_d {
                gradient[a] += g[a];
            }
        }
        gradient.iter_mut().for_each(|v| *v /= n);
        if gradient.iter().any(|v| !v.is_finite()) {
            return Err(EigError::NonFinite("gradient".into()));
        }
        Ok(EigValueAndGrad {
            value: mean(&values),
            gradient,
            n_model_evals: (samples.n_outer() * (m + 1)) as u64,
        })
    }
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ConstantModel, LinearGaussianModel};

    fn linear(n: usize, m: usize, alpha: f64, beta: f64) -> EigEstimator {
        EigEstimator::new(
            Arc::new(LinearGaussianModel::new(1.0)),
            NoiseModel::uniform(1, alpha, beta).unwrap(),
            PriorSpec::standard_normal(1).unwrap(),
            n,
            m,
            Bounds::new(vec![-2.0], vec![2.0]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn log_mean_exp_is_stable() {
        assert!((log_mean_exp(&[-1000.0, -1000.0]) + 1000.0).abs() < 1e-12);
        let v = [0.1, -0.3, 0.7];
        let direct = (v.iter().map(|x: &f64| x.exp()).sum::<f64>() / 3.0).ln();
        assert!((log_mean_exp(&v) - direct).abs() < 1e-14);
    }

    #[test]
    fn constant_model_has_zero_information() {
        let est = EigEstimator::new(
            Arc::new(ConstantModel::new(vec![1.0, -2.0], 2, 2)),
            NoiseModel::uniform(2, 0.1, 0.1).unwrap(),
            PriorSpec::uniform_box(&[(0.0, 1.0), (0.0, 1.0)]).unwrap(),
            20,
            7,
            Bounds::unit(2),
        )
        .unwrap();
        for seed in 0..5 {
            assert_eq!(est.eig_value_fresh(&[0.3, 0.8], seed).unwrap(), 0.0);
        }
        let g = est.eig_gradient(&[0.3, 0.8], &est.draw_sample_set(1)).unwrap();
        assert_eq!(g.gradient, vec![0.0, 0.0]);
        assert_eq!(g.n_model_evals, 20 * 8);
    }

    #[test]
    fn gradient_value_matches_value_bitwise() {
        let est = linear(50, 30, 0.5, 0.2);
        let s = est.draw_sample_set(3);
        let v = est.eig_value(&[0.7], &s).unwrap();
        let g = est.eig_gradient(&[0.7], &s).unwrap();
        assert_eq!(v.to_bits(), g.value.to_bits());
    }

    #[test]
    fn constant_noise_paths_agree() {
        let est = linear(40, 25, 0.5, 0.0);
        let s = est.draw_sample_set(9);
        for d in [-1.3, 0.0, 0.4, 1.9] {
            let a = est.eig_gradient(&[d], &s).unwrap();
            let b = est.eig_gradient_constant_noise(&[d], &s).unwrap();
            assert_eq!(a.value.to_bits(), b.value.to_bits());
            assert!((a.gradient[0] - b.gradient[0]).abs() <= 1e-12 * a.gradient[0].abs().max(1.0));
        }
    }

    #[test]
    fn rejects_out_of_bounds_design_and_bad_sizes() {
        let est = linear(5, 5, 0.5, 0.0);
        let s = est.draw_sample_set(0);
        assert!(matches!(est.eig_value(&[2.5], &s), Err(EigError::DesignOutOfBounds { .. })));
        assert!(est.eig_value(&[f64::NAN], &s).is_err());
        assert!(est.with_sizes(0, 3).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let est = linear(30, 20, 0.3, 0.4);
        let s = est.draw_sample_set(21);
        for d in [-1.5, -0.2, 0.35, 1.1] {
            let g = est.eig_gradient(&[d], &s).unwrap().gradient[0];
            let h = 1e-5;
            let fd = (est.eig_value(&[d + h], &s).unwrap() - est.eig_value(&[d - h], &s).unwrap()) / (2.0 * h);
            assert!((g - fd).abs() <= 1e-4 * fd.abs().max(1e-3), "d = {d}: {g} vs {fd}");
        }
    }
}
