use super::{check_len, DesignSlice, ForwardModel, ModelError};

/// `G(θ, d) = d θ` with scalar `θ ~ N(0, σ_θ²)`; under additive noise of
/// standard deviation `α` the expected information gain is
/// `½ ln(1 + d² σ_θ² / α²)`.
#[derive(Debug, Clone, Copy)]
pub struct LinearGaussianModel {
    pub prior_std: f64,
}

impl LinearGaussianModel {
    pub fn new(prior_std: f64) -> Self {
        LinearGaussianModel { prior_std }
    }

    /// Closed-form information gain in nats for noise level `alpha > 0`.
    pub fn closed_form_eig(&self, design: f64, alpha: f64) -> f64 {
        0.5 * (1.0 + design * design * self.prior_std * self.prior_std / (alpha * alpha)).ln()
    }
}

impl ForwardModel for LinearGaussianModel {
    fn n_theta(&self) -> usize {
        1
    }

    fn n_design(&self) -> usize {
        1
    }

    fn n_outputs(&self) -> usize {
        1
    }

    fn value(&self, theta: &[f64], design: &[f64]) -> Result<Vec<f64>, ModelError> {
        check_len("theta", 1, theta.len())?;
        check_len("design", 1, design.len())?;
        Ok(vec![design[0] * theta[0]])
    }

    fn has_design_gradient(&self) -> bool {
        true
    }

    fn design_gradient(&self, theta: &[f64], design: &[f64]) -> Result<Vec<f64>, ModelError> {
        check_len("theta", 1, theta.len())?;
        check_len("design", 1, design.len())?;
        Ok(vec![theta[0]])
    }

    fn at_design<'a>(&'a self, design: &[f64]) -> Result<Box<dyn DesignSlice + 'a>, ModelError> {
        check_len("design", 1, design.len())?;
        Ok(Box::new(LinearSlice { design: design[0] }))
    }
}

struct LinearSlice {
    design: f64,
}

impl DesignSlice for LinearSlice {
    fn value_into(&self, theta: &[f64], out: &mut [f64]) -> Result<(), ModelError> {
        out[0] = self.design * theta[0];
        Ok(())
    }

    fn value_and_jacobian_into(&self, theta: &[f64], out: &mut [f64], jac: &mut [f64]) -> Result<(), ModelError> {
        out[0] = self.design * theta[0];
        jac[0] = theta[0];
        Ok(())
    }
}
