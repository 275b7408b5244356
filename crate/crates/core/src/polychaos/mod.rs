//! Legendre polynomial-chaos surrogates over a joint parameter/design
//! hypercube: basis functions, total-order index sets, Clenshaw-Curtis based
//! quadrature, and non-intrusive spectral projection.

mod expansion;
mod index;
mod legendre;
mod quadrature;

pub use expansion::{project, AffineMap, ExpansionDocument, FixedDesignExpansion, PCExpansion};
pub use index::{binomial, total_order_index_set, IndexSet, MultiIndex};
pub use legendre::{legendre_derivative, legendre_norm_squared, legendre_table, legendre_value, legendre_values};
pub use quadrature::{
    cc_points, clenshaw_curtis_1d, smolyak_quadrature, smolyak_quadrature_with_budget, tensor_quadrature,
    tensor_quadrature_with_budget, QuadratureRule, DEFAULT_POINT_BUDGET,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PceError {
    #[error("stochastic dimension must be at least 1")]
    ZeroDimension,
    #[error("{what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("quadrature would need {points} points, over the budget of {budget}")]
    PointBudget { points: usize, budget: usize },
    #[error("affine map needs finite gamma and non-zero finite delta (gamma = {gamma}, delta = {delta})")]
    InvalidMap { gamma: f64, delta: f64 },
    #[error("model output {output} is {value} at node {node:?}")]
    NonFiniteOutput { node: Vec<f64>, output: usize, value: f64 },
    #[error("model output {output} is {value} at node {node:?}; log-space projection needs positive outputs")]
    NonPositiveOutput { node: Vec<f64>, output: usize, value: f64 },
    #[error("input {value} in dimension {dim} maps outside [-1, 1]")]
    OutOfDomain { dim: usize, value: f64 },
    #[error("malformed expansion document: {0}")]
    Format(String),
}
