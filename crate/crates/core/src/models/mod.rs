//! Forward models `G(θ, d)`: the diffusion source-inversion benchmark, a
//! linear-Gaussian oracle with closed-form information gain, and a constant
//! model for degenerate checks.

mod constant;
pub mod diffusion;
mod linear;

pub use constant::ConstantModel;
pub use diffusion::{DiffusionConfig, DiffusionModel, DiffusionSolver, FieldHistory};
pub use linear::LinearGaussianModel;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model does not provide design gradients")]
    NoDesignGradient,
    #[error("{what}: expected length {expected}, got {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("input {value} in dimension {dim} lies outside the model domain")]
    OutOfDomain { dim: usize, value: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("solver produced a non-finite field at t = {time}")]
    NonFiniteField { time: f64 },
    #[error("requested time {0} is outside the stored history")]
    TimeOutOfRange(f64),
}

/// A map from parameters `θ` and design `d` to `n_y` observables.
pub trait ForwardModel: Send + Sync {
    fn n_theta(&self) -> usize;
    fn n_design(&self) -> usize;
    fn n_outputs(&self) -> usize;

    fn value(&self, theta: &[f64], design: &[f64]) -> Result<Vec<f64>, ModelError>;

    fn has_design_gradient(&self) -> bool {
        false
    }

    /// `∂G_c/∂d_a` as a row-major `n_y × n_d` matrix.
    fn design_gradient(&self, _theta: &[f64], _design: &[f64]) -> Result<Vec<f64>, ModelError> {
        Err(ModelError::NoDesignGradient)
    }

    /// Fixes the design so that repeated evaluations over many `θ` can reuse
    /// design-only work. The default forwards to `value`/`design_gradient`.
    fn at_design<'a>(&'a self, design: &[f64]) -> Result<Box<dyn DesignSlice + 'a>, ModelError> {
        check_len("design", self.n_design(), design.len())?;
        Ok(Box::new(Pointwise {
            model: self,
            design: design.to_vec(),
        }))
    }
}

/// A forward model with its design held fixed.
pub trait DesignSlice: Send + Sync {
    fn value_into(&self, theta: &[f64], out: &mut [f64]) -> Result<(), ModelError>;

    /// Writes `G(θ, d)` into `out` and the row-major `n_y × n_d` Jacobian into `jac`.
    fn value_and_jacobian_into(&self, theta: &[f64], out: &mut [f64], jac: &mut [f64]) -> Result<(), ModelError>;
}

struct Pointwise<'a, M: ?Sized> {
    model: &'a M,
    design: Vec<f64>,
}

impl<M: ForwardModel + ?Sized> DesignSlice for Pointwise<'_, M> {
    fn value_into(&self, theta: &[f64], out: &mut [f64]) -> Result<(), ModelError> {
        let v = self.model.value(theta, &self.design)?;
        out.copy_from_slice(&v);
        Ok(())
    }

    fn value_and_jacobian_into(&self, theta: &[f64], out: &mut [f64], jac: &mut [f64]) -> Result<(), ModelError> {
        self.value_into(theta, out)?;
        let g = self.model.design_gradient(theta, &self.design)?;
        jac.copy_from_slice(&g);
        Ok(())
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, found: usize) -> Result<(), ModelError> {
    if expected == found {
        Ok(())
    } else {
        Err(ModelError::DimensionMismatch { what, expected, found })
    }
}
