use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::time::Instant;

use super::{Bounds, OptimError, OptimizationTrace, Termination};
use crate::eig::EigError;

/// Backtracking parameters: start at step 1, multiply by `contraction`
/// until the Armijo condition holds or the step drops below `min_step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineSearch {
    pub contraction: f64,
    pub armijo: f64,
    pub min_step: f64,
}

impl Default for LineSearch {
    fn default() -> Self {
        LineSearch {
            contraction: 0.5,
            armijo: 1e-4,
            min_step: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BfgsOptions {
    pub grad_tol: f64,
    pub max_iters: usize,
    /// Stop when an accepted step is shorter than this.
    pub step_tol: f64,
    pub line_search: LineSearch,
    pub bounds: Bounds,
}

impl BfgsOptions {
    pub fn new(bounds: Bounds) -> Self {
        BfgsOptions {
            grad_tol: 1e-5,
            max_iters: 100,
            step_tol: 1e-12,
            line_search: LineSearch::default(),
            bounds,
        }
    }

    pub fn validate(&self) -> Result<(), OptimError> {
        let ls = &self.line_search;
        if !(ls.contraction > 0.0 && ls.contraction < 1.0) || !(ls.armijo > 0.0 && ls.armijo < 1.0) {
            return Err(OptimError::InvalidOptions(
                "line search contraction and Armijo constant must lie in (0, 1)".into(),
            ));
        }
        if !(ls.min_step > 0.0) || !(self.grad_tol > 0.0) || !(self.step_tol >= 0.0) || self.max_iters == 0 {
            return Err(OptimError::InvalidOptions(
                "min_step and grad_tol must be positive, max_iters at least 1".into(),
            ));
        }
        Ok(())
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Maximizes a deterministic objective by BFGS on its negation.
///
/// `H₀ = I`; iterates stay in the box by projection, the Armijo test uses the
/// projected step, and coordinates pinned at a bound with the gradient
/// pointing outward are held fixed when forming the quasi-Newton direction.
/// Convergence is declared when the projected gradient `x - Π(x + ∇f)` is
/// shorter than `grad_tol`.
pub fn bfgs_maximize<F>(mut value_and_grad: F, x0: &[f64], opts: &BfgsOptions) -> Result<OptimizationTrace, OptimError>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>), EigError>,
{
    opts.validate()?;
    if !opts.bounds.contains(x0) {
        return Err(OptimError::StartOutOfBounds(x0.to_vec()));
    }
    let start = Instant::now();
    let n = x0.len();
    let bounds = &opts.bounds;
    let ls = opts.line_search;
    let mut evals = 0usize;

    // φ = -f and ∇φ = -∇f throughout
    let mut eval = |x: &[f64], iteration: usize, evals: &mut usize| -> Result<(f64, Vec<f64>), OptimError> {
        *evals += 1;
        let (f, g) = value_and_grad(x).map_err(|source| OptimError::Objective { iteration, source })?;
        if !f.is_finite() {
            return Err(OptimError::NonFinite {
                what: "objective",
                iteration,
                x: x.to_vec(),
            });
        }
        if g.len() != n || g.iter().any(|v| !v.is_finite()) {
            return Err(OptimError::NonFinite {
                what: "gradient",
                iteration,
                x: x.to_vec(),
            });
        }
        Ok((-f, g.into_iter().map(|v| -v).collect()))
    };

    let mut x = x0.to_vec();
    let (mut phi, mut grad) = eval(&x, 0, &mut evals)?;
    let mut h = DMatrix::<f64>::identity(n, n);
    let mut iterates = vec![x.clone()];
    let mut values = vec![-phi];
    let mut step_sizes = Vec::new();
    let mut resets = 0;
    let mut termination = Termination::MaxIters;
    let mut k = 0;

    loop {
        let moved: Vec<f64> = x.iter().zip(&grad).map(|(xi, gi)| xi - gi).collect();
        let pg: Vec<f64> = bounds.projected(&moved).iter().zip(&x).map(|(a, b)| b - a).collect();
        if norm(&pg) < opts.grad_tol {
            termination = Termination::GradientStalled;
            break;
        }
        if k >= opts.max_iters {
            break;
        }
        k += 1;

        let active: Vec<bool> = (0..n)
            .map(|i| {
                (x[i] <= bounds.lower()[i] && grad[i] > 0.0) || (x[i] >= bounds.upper()[i] && grad[i] < 0.0)
            })
            .collect();
        let g_free = DVector::from_iterator(n, (0..n).map(|i| if active[i] { 0.0 } else { grad[i] }));
        let mut p: Vec<f64> = (&h * &g_free).iter().map(|v| -v).collect();
        for i in 0..n {
            if active[i] {
                p[i] = 0.0;
            }
        }
        let trial_full: Vec<f64> = bounds.projected(&x.iter().zip(&p).map(|(a, b)| a + b).collect::<Vec<_>>());
        let descent = dot(&grad, &trial_full.iter().zip(&x).map(|(a, b)| a - b).collect::<Vec<_>>());
        if !(descent < 0.0) {
            p = grad.iter().map(|v| -v).collect();
        }

        let mut alpha = 1.0;
        let accepted = loop {
            let trial: Vec<f64> = x.iter().zip(&p).map(|(a, b)| a + alpha * b).collect();
            let trial = bounds.projected(&trial);
            let step: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
            if step.iter().all(|&s| s == 0.0) {
                break None;
            }
            let (phi_t, grad_t) = eval(&trial, k, &mut evals)?;
            if phi_t <= phi + ls.armijo * dot(&grad, &step) {
                break Some((trial, step, phi_t, grad_t));
            }
            alpha *= ls.contraction;
            if alpha < ls.min_step {
                break None;
            }
        };
        let Some((x_new, s, phi_new, grad_new)) = accepted else {
            termination = if alpha < ls.min_step {
                Termination::LineSearchFailed
            } else {
                Termination::PositionStalled
            };
            break;
        };

        let u: Vec<f64> = grad_new.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let su = dot(&s, &u);
        if su > 1e-12 * norm(&s) * norm(&u) {
            let sv = DVector::from_column_slice(&s);
            let uv = DVector::from_column_slice(&u);
            let rho = 1.0 / su;
            let left = DMatrix::<f64>::identity(n, n) - rho * &sv * uv.transpose();
            let updated = &left * &h * left.transpose() + rho * &sv * sv.transpose();
            let sym = 0.5 * (&updated + updated.transpose());
            if sym.clone().cholesky().is_some() {
                h = sym;
            } else {
                h = DMatrix::identity(n, n);
                resets += 1;
            }
        }

        let step_len = norm(&s);
        x = x_new;
        phi = phi_new;
        grad = grad_new;
        iterates.push(x.clone());
        values.push(-phi);
        step_sizes.push(alpha);
        if step_len < opts.step_tol {
            termination = Termination::StepStalled;
            break;
        }
    }

    Ok(OptimizationTrace {
        iterates,
        step_sizes,
        values,
        termination,
        iterations: k,
        n_objective_evals: evals,
        n_gradient_evals: evals,
        n_hessian_resets: resets,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wide() -> Bounds {
        Bounds::new(vec![-10.0, -10.0], vec![10.0, 10.0]).unwrap()
    }

    #[test]
    fn concave_quadratic_converges_quickly() {
        let a = [[3.0, 1.0], [1.0, 2.0]];
        let xs = [0.4, -1.3];
        let f = |x: &[f64]| {
            let d = [x[0] - xs[0], x[1] - xs[1]];
            let ad = [a[0][0] * d[0] + a[0][1] * d[1], a[1][0] * d[0] + a[1][1] * d[1]];
            Ok((-(d[0] * ad[0] + d[1] * ad[1]), vec![-2.0 * ad[0], -2.0 * ad[1]]))
        };
        let mut opts = BfgsOptions::new(wide());
        opts.grad_tol = 1e-10;
        let t = bfgs_maximize(f, &[3.0, 2.0], &opts).unwrap();
        let x = t.final_iterate();
        assert!((x[0] - xs[0]).abs() < 1e-8 && (x[1] - xs[1]).abs() < 1e-8, "{x:?}");
        assert!(t.iterations <= 10, "{} iterations", t.iterations);
        assert_eq!(t.termination, Termination::GradientStalled);
    }

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            let v = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let ga = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
            let gb = 200.0 * (b - a * a);
            Ok((-v, vec![-ga, -gb]))
        };
        let mut opts = BfgsOptions::new(wide());
        opts.grad_tol = 1e-9;
        opts.max_iters = 500;
        let t = bfgs_maximize(f, &[-1.2, 1.0], &opts).unwrap();
        let x = t.final_iterate();
        assert!((x[0] - 1.0).abs() < 1e-6 && (x[1] - 1.0).abs() < 1e-6, "{x:?} {:?}", t.termination);
        assert_eq!(t.n_hessian_resets, 0);
    }

    #[test]
    fn starting_at_optimum_stops_immediately() {
        let t = bfgs_maximize(
            |x: &[f64]| Ok((-(x[0] - 0.5).powi(2), vec![-2.0 * (x[0] - 0.5)])),
            &[0.5],
            &BfgsOptions::new(Bounds::unit(1)),
        )
        .unwrap();
        assert_eq!(t.termination, Termination::GradientStalled);
        assert_eq!(t.iterations, 0);
        assert_eq!(t.iterates.len(), 1);
    }

    #[test]
    fn optimum_outside_box_lands_on_corner() {
        let t = bfgs_maximize(
            |x: &[f64]| Ok((x[0] + 2.0 * x[1], vec![1.0, 2.0])),
            &[0.2, 0.3],
            &BfgsOptions::new(Bounds::unit(2)),
        )
        .unwrap();
        assert_eq!(t.final_iterate(), &[1.0, 1.0]);
        assert_eq!(t.termination, Termination::GradientStalled);
        assert!(t.iterates.iter().all(|x| Bounds::unit(2).contains(x)));
    }

    #[test]
    fn non_finite_objective_aborts() {
        let r = bfgs_maximize(|_| Ok((f64::NAN, vec![0.0])), &[0.5], &BfgsOptions::new(Bounds::unit(1)));
        assert!(matches!(r, Err(OptimError::NonFinite { .. })));
    }
}
