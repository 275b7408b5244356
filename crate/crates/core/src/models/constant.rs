use super::{check_len, ForwardModel, ModelError};

/// A model whose outputs ignore both `θ` and `d`.
#[derive(Debug, Clone)]
pub struct ConstantModel {
    outputs: Vec<f64>,
    n_theta: usize,
    n_design: usize,
}

impl ConstantModel {
    pub fn new(outputs: Vec<f64>, n_theta: usize, n_design: usize) -> Self {
        ConstantModel {
            outputs,
            n_theta,
            n_design,
        }
    }
}

impl ForwardModel for ConstantModel {
    fn n_theta(&self) -> usize {
        self.n_theta
    }

    fn n_design(&self) -> usize {
        self.n_design
    }

    fn n_outputs(&self) -> usize {
        self.outputs.len()
    }

    fn value(&self, theta: &[f64], design: &[f64]) -> Result<Vec<f64>, ModelError> {
        check_len("theta", self.n_theta, theta.len())?;
        check_len("design", self.n_design, design.len())?;
        Ok(self.outputs.clone())
    }

    fn has_design_gradient(&self) -> bool {
        true
    }

    fn design_gradient(&self, theta: &[f64], design: &[f64]) -> Result<Vec<f64>, ModelError> {
        self.value(theta, design)?;
        Ok(vec![0.0; self.outputs.len() * self.n_design])
    }
}
