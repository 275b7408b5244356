//! Bayesian optimal experimental design by stochastic optimization of the
//! expected information gain.
//!
//! - [`polychaos`]: Legendre chaos surrogates, Clenshaw-Curtis tensor and
//!   Smolyak quadrature, spectral projection.
//! - [`models`]: forward models, including the diffusion source-inversion
//!   benchmark.
//! - [`eig`]: nested Monte Carlo information-gain estimator and its gradient.
//! - [`optim`]: Robbins-Monro, BFGS and replicated sample-average drivers.
//! - [`harness`]: surrogate construction, experiment matrices and reports.

pub mod eig;
pub mod models;
pub mod optim;
pub mod polychaos;
pub mod seed;
pub mod harness;
