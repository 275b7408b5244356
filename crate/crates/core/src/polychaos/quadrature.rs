//! Clenshaw-Curtis rules and their tensor and isotropic Smolyak combinations.
//!
//! Weights absorb the uniform density on [-1, 1]^n, so every rule's weights
//! sum to one and `Σ w_q f(x_q)` approximates `E[f(Ξ)]` directly.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use super::PceError;

/// Default cap on the number of tensor points a rule may materialize.
pub const DEFAULT_POINT_BUDGET: usize = 10_000_000;

/// Nodes in `[-1, 1]^dim` (row-major) with normalized weights.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    dim: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn new(dim: usize, nodes: Vec<f64>, weights: Vec<f64>) -> Result<Self, PceError> {
        if dim == 0 {
            return Err(PceError::ZeroDimension);
        }
        if nodes.len() != dim * weights.len() {
            return Err(PceError::DimensionMismatch {
                what: "quadrature nodes",
                expected: dim * weights.len(),
                found: nodes.len(),
            });
        }
        Ok(QuadratureRule { dim, nodes, weights })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn node(&self, q: usize) -> &[f64] {
        &self.nodes[q * self.dim..(q + 1) * self.dim]
    }

    pub fn nodes(&self) -> impl Iterator<Item = &[f64]> {
        self.nodes.chunks_exact(self.dim)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `Σ_q w_q f(x_q)`.
    pub fn integrate<F: Fn(&[f64]) -> f64>(&self, f: F) -> f64 {
        self.nodes().zip(&self.weights).map(|(x, w)| w * f(x)).sum()
    }
}

/// Points in the 1-D Clenshaw-Curtis rule at `level`: 1, 3, 5, 9, 17, ...
pub fn cc_points(level: u32) -> usize {
    if level == 0 {
        1
    } else {
        (1usize << level) + 1
    }
}

/// Node `k` of a level-`level` rule as an exact dyadic key at `finest` level,
/// so nested nodes coincide as integers.
fn cc_key(level: u32, k: usize, finest: u32) -> u64 {
    if level == 0 {
        // the midpoint, cos(π/2)
        if finest == 0 {
            0
        } else {
            1u64 << (finest - 1)
        }
    } else {
        (k as u64) << (finest - level)
    }
}

/// Coordinate for a dyadic key at `finest` level. Node `k` of `2^L` intervals
/// sits at `-cos(π k / 2^L)`; keys are reduced first so that a node shared by
/// several levels is always computed from the same arguments.
fn cc_coordinate(key: u64, finest: u32) -> f64 {
    if finest == 0 {
        return 0.0;
    }
    let (mut num, mut den_pow) = (key, finest);
    while den_pow > 0 && num % 2 == 0 {
        num /= 2;
        den_pow -= 1;
    }
    let den = 1u64 << den_pow;
    if 2 * num == den {
        0.0
    } else if num == 0 {
        -1.0
    } else if num == den {
        1.0
    } else {
        -(PI * num as f64 / den as f64).cos()
    }
}

/// 1-D nested Clenshaw-Curtis rule, nodes ascending in [-1, 1].
pub fn clenshaw_curtis_1d(level: u32) -> QuadratureRule {
    let (keys, weights) = cc_keys_weights(level, level);
    let nodes = keys.iter().map(|&k| cc_coordinate(k, level)).collect();
    QuadratureRule {
        dim: 1,
        nodes,
        weights,
    }
}

fn cc_keys_weights(level: u32, finest: u32) -> (Vec<u64>, Vec<f64>) {
    if level == 0 {
        return (vec![cc_key(0, 0, finest)], vec![1.0]);
    }
    let n = 1usize << level; // intervals
    let mut keys = Vec::with_capacity(n + 1);
    let mut weights = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let theta = PI * k as f64 / n as f64;
        let mut sum = 0.0;
        for j in 1..=n / 2 {
            let b = if 2 * j == n { 1.0 } else { 2.0 };
            sum += b / (4.0 * (j * j) as f64 - 1.0) * (2.0 * j as f64 * theta).cos();
        }
        let c = if k == 0 || k == n { 1.0 } else { 2.0 };
        // Classical weights sum to 2 on [-1, 1]; halve for the uniform density.
        weights.push(0.5 * c / n as f64 * (1.0 - sum));
        keys.push(cc_key(level, k, finest));
    }
    (keys, weights)
}

/// Full tensor product of 1-D Clenshaw-Curtis rules, one level per dimension.
pub fn tensor_quadrature(levels: &[u32]) -> Result<QuadratureRule, PceError> {
    tensor_quadrature_with_budget(levels, DEFAULT_POINT_BUDGET)
}

pub fn tensor_quadrature_with_budget(levels: &[u32], budget: usize) -> Result<QuadratureRule, PceError> {
    if levels.is_empty() {
        return Err(PceError::ZeroDimension);
    }
    let points = tensor_size(levels);
    if points > budget {
        return Err(PceError::PointBudget { points, budget });
    }
    let finest = levels.iter().copied().max().unwrap_or(0);
    let merged = tensor_accumulate(levels, finest, 1.0, BTreeMap::new());
    Ok(from_keyed(levels.len(), finest, merged))
}

fn tensor_size(levels: &[u32]) -> usize {
    levels
        .iter()
        .map(|&l| cc_points(l))
        .fold(1usize, |acc, n| acc.saturating_mul(n))
}

fn tensor_accumulate(
    levels: &[u32],
    finest: u32,
    scale: f64,
    mut acc: BTreeMap<Vec<u64>, f64>,
) -> BTreeMap<Vec<u64>, f64> {
    let rules: Vec<(Vec<u64>, Vec<f64>)> = levels.iter().map(|&l| cc_keys_weights(l, finest)).collect();
    let dim = levels.len();
    let mut counter = vec![0usize; dim];
    loop {
        let mut key = Vec::with_capacity(dim);
        let mut w = scale;
        for (d, &c) in counter.iter().enumerate() {
            key.push(rules[d].0[c]);
            w *= rules[d].1[c];
        }
        *acc.entry(key).or_insert(0.0) += w;

        let mut d = 0;
        loop {
            counter[d] += 1;
            if counter[d] < rules[d].0.len() {
                break;
            }
            counter[d] = 0;
            d += 1;
            if d == dim {
                return acc;
            }
        }
    }
}

fn from_keyed(dim: usize, finest: u32, merged: BTreeMap<Vec<u64>, f64>) -> QuadratureRule {
    let mut nodes = Vec::with_capacity(merged.len() * dim);
    let mut weights = Vec::with_capacity(merged.len());
    for (key, w) in merged {
        if w == 0.0 {
            continue;
        }
        nodes.extend(key.iter().map(|&k| cc_coordinate(k, finest)));
        weights.push(w);
    }
    QuadratureRule { dim, nodes, weights }
}

/// Isotropic Smolyak rule from nested Clenshaw-Curtis levels, via the
/// combination technique
///
/// ```text
/// A(L, n) = Σ_{L-n+1 ≤ |l| ≤ L} (-1)^{L-|l|} C(n-1, L-|l|) ⊗_j U^{l_j}
/// ```
///
/// with coincident nodes merged on exact dyadic keys. Exact for polynomials of
/// total degree `2L + 1`.
pub fn smolyak_quadrature(dim: usize, level: u32) -> Result<QuadratureRule, PceError> {
    smolyak_quadrature_with_budget(dim, level, DEFAULT_POINT_BUDGET)
}

pub fn smolyak_quadrature_with_budget(dim: usize, level: u32, budget: usize) -> Result<QuadratureRule, PceError> {
    if dim == 0 {
        return Err(PceError::ZeroDimension);
    }
    let lo = (level as i64 - dim as i64 + 1).max(0) as u32;
    let mut terms = Vec::new();
    let mut scratch = vec![0u32; dim];
    for total in lo..=level {
        level_vectors(total, 0, &mut scratch, &mut terms);
    }
    let points: usize = terms.iter().map(|l| tensor_size(l)).fold(0usize, |a, b| a.saturating_add(b));
    if points > budget {
        return Err(PceError::PointBudget { points, budget });
    }
    let mut acc = BTreeMap::new();
    for l in &terms {
        let total: u32 = l.iter().sum();
        let gap = (level - total) as u64;
        let coeff = super::index::binomial(dim as u64 - 1, gap) as f64;
        let sign = if gap % 2 == 0 { 1.0 } else { -1.0 };
        acc = tensor_accumulate(l, level, sign * coeff, acc);
    }
    Ok(from_keyed(dim, level, acc))
}

fn level_vectors(remaining: u32, pos: usize, scratch: &mut [u32], out: &mut Vec<Vec<u32>>) {
    if pos + 1 == scratch.len() {
        scratch[pos] = remaining;
        out.push(scratch.to_vec());
        return;
    }
    for first in 0..=remaining {
        scratch[pos] = first;
        level_vectors(remaining - first, pos + 1, scratch, out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn monomial_moment(power: u32) -> f64 {
        if power % 2 == 1 {
            0.0
        } else {
            1.0 / (power as f64 + 1.0)
        }
    }

    #[test]
    fn level_zero_is_midpoint() {
        let r = clenshaw_curtis_1d(0);
        assert_eq!(r.len(), 1);
        assert_eq!(r.node(0), &[0.0]);
        assert_eq!(r.weights(), &[1.0]);
    }

    #[test]
    fn level_one_is_normalized_simpson() {
        let r = clenshaw_curtis_1d(1);
        let nodes: Vec<f64> = r.nodes().map(|x| x[0]).collect();
        assert_eq!(nodes, vec![-1.0, 0.0, 1.0]);
        assert_relative_eq!(r.weights()[0], 1.0 / 6.0, epsilon = 1e-15);
        assert_relative_eq!(r.weights()[1], 4.0 / 6.0, epsilon = 1e-15);
        assert_relative_eq!(r.weights()[2], 1.0 / 6.0, epsilon = 1e-15);
        assert_relative_eq!(r.integrate(|x| x[0] * x[0]), 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn one_d_exactness_and_weights() {
        for level in 0..=6u32 {
            let r = clenshaw_curtis_1d(level);
            assert_eq!(r.len(), cc_points(level));
            assert_relative_eq!(r.weights().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
            assert!(r.weights().iter().all(|&w| w > 0.0));
            // n odd points integrate degree n exactly
            let exact_to = cc_points(level) as u32;
            for p in 0..=exact_to {
                let got = r.integrate(|x| x[0].powi(p as i32));
                assert!((got - monomial_moment(p)).abs() < 1e-13, "level {level} power {p}: {got}");
            }
        }
    }

    #[test]
    fn tensor_rules() {
        let r = tensor_quadrature(&[0, 0]).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r.node(0), &[0.0, 0.0]);
        assert_eq!(r.weights(), &[1.0]);

        let r = tensor_quadrature(&[1, 1]).unwrap();
        assert_eq!(r.len(), 9);
        assert_relative_eq!(r.weights().iter().sum::<f64>(), 1.0, epsilon = 1e-15);
        assert_relative_eq!(r.integrate(|x| x[0].powi(2) * x[1].powi(2)), 1.0 / 9.0, epsilon = 1e-15);

        let r = tensor_quadrature(&[2, 1, 3]).unwrap();
        assert_eq!(r.len(), 5 * 3 * 9);
        let got = r.integrate(|x| x[0].powi(4) * x[1].powi(2) * x[2].powi(8));
        assert_relative_eq!(got, (1.0 / 5.0) * (1.0 / 3.0) * (1.0 / 9.0), epsilon = 1e-14);
    }

    #[test]
    fn tensor_budget_guard() {
        let err = tensor_quadrature_with_budget(&[5, 5, 5], 1000).unwrap_err();
        assert!(matches!(err, PceError::PointBudget { points: 35937, budget: 1000 }));
    }

    #[test]
    fn smolyak_small_cases() {
        for dim in 1..=4 {
            let r = smolyak_quadrature(dim, 0).unwrap();
            assert_eq!(r.len(), 1);
            assert!(r.node(0).iter().all(|&x| x == 0.0));
            assert_relative_eq!(r.weights()[0], 1.0, epsilon = 1e-15);
        }
        let r = smolyak_quadrature(2, 1).unwrap();
        assert_eq!(r.len(), 5);
        assert_relative_eq!(r.integrate(|x| x[0] * x[0] + x[1] * x[1]), 2.0 / 3.0, epsilon = 1e-15);
        for level in 1..=4 {
            let r = smolyak_quadrature(3, level).unwrap();
            assert_relative_eq!(r.weights().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
            assert_relative_eq!(
                r.integrate(|x| x[0] * x[0] + x[1] * x[1] + x[2] * x[2]),
                1.0,
                epsilon = 1e-13
            );
        }
    }

    #[test]
    fn smolyak_is_nested_rule_size() {
        // Known counts for nested CC sparse grids in 2D: 1, 5, 13, 29, 65.
        let counts: Vec<usize> = (0..=4).map(|l| smolyak_quadrature(2, l).unwrap().len()).collect();
        assert_eq!(counts, vec![1, 5, 13, 29, 65]);
    }

    #[test]
    fn smolyak_matches_tensor_on_total_degree_monomials() {
        for dim in [2usize, 3] {
            for level in 1..=4u32 {
                let sparse = smolyak_quadrature(dim, level).unwrap();
                let full = tensor_quadrature(&vec![level; dim]).unwrap();
                let max_deg = 2 * level - 1;
                let mut powers = vec![0u32; dim];
                loop {
                    if powers.iter().sum::<u32>() <= max_deg {
                        let f = |x: &[f64]| x.iter().zip(&powers).map(|(v, &p)| v.powi(p as i32)).product::<f64>();
                        let a = sparse.integrate(f);
                        let b = full.integrate(f);
                        assert!((a - b).abs() < 1e-12, "dim {dim} level {level} powers {powers:?}: {a} vs {b}");
                    }
                    let mut d = 0;
                    loop {
                        powers[d] += 1;
                        if powers[d] <= max_deg {
                            break;
                        }
                        powers[d] = 0;
                        d += 1;
                        if d == dim {
                            break;
                        }
                    }
                    if d == dim {
                        break;
                    }
                }
            }
        }
    }

    #[test]
    fn smolyak_budget_guard() {
        assert!(matches!(
            smolyak_quadrature_with_budget(6, 6, 100),
            Err(PceError::PointBudget { .. })
        ));
    }
}
