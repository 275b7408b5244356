use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::index::{total_order_index_set, IndexSet};
use super::legendre::{legendre_table, legendre_values};
use super::quadrature::QuadratureRule;
use super::PceError;
use crate::models::{check_len, DesignSlice, ForwardModel, ModelError};

const DOMAIN_TOL: f64 = 1e-9;

/// Maps a standardized variable `ξ ∈ [-1, 1]` to `γ + δ ξ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub gamma: f64,
    pub delta: f64,
}

impl AffineMap {
    pub fn new(gamma: f64, delta: f64) -> Result<Self, PceError> {
        if delta == 0.0 || !delta.is_finite() || !gamma.is_finite() {
            return Err(PceError::InvalidMap { gamma, delta });
        }
        Ok(AffineMap { gamma, delta })
    }

    /// The map sending `[-1, 1]` onto `[lower, upper]`.
    pub fn from_interval(lower: f64, upper: f64) -> Result<Self, PceError> {
        Self::new(0.5 * (lower + upper), 0.5 * (upper - lower))
    }

    #[inline]
    pub fn to_physical(&self, xi: f64) -> f64 {
        self.gamma + self.delta * xi
    }

    #[inline]
    pub fn to_standard(&self, x: f64) -> f64 {
        (x - self.gamma) / self.delta
    }
}

/// Multi-output Legendre chaos expansion over the joint `(θ, d)` hypercube.
///
/// Dimensions `0..n_theta` are parameters and the rest are design variables.
/// With `log_space` the series represents `ln G_c` and evaluation exponentiates.
#[derive(Debug, Clone)]
pub struct PCExpansion {
    index_set: IndexSet,
    n_theta: usize,
    maps: Vec<AffineMap>,
    n_outputs: usize,
    /// Row-major `n_outputs × index_set.len()`.
    coefficients: Vec<f64>,
    log_space: bool,
    max_degree: usize,
    /// `θ`-part grouping used by fixed-design evaluation.
    theta_parts: Vec<Vec<u32>>,
    term_theta_part: Vec<usize>,
}

impl PCExpansion {
    pub fn new(
        index_set: IndexSet,
        n_theta: usize,
        maps: Vec<AffineMap>,
        n_outputs: usize,
        coefficients: Vec<f64>,
        log_space: bool,
    ) -> Result<Self, PceError> {
        let dim = index_set.dimension();
        if maps.len() != dim {
            return Err(PceError::DimensionMismatch {
                what: "affine maps",
                expected: dim,
                found: maps.len(),
            });
        }
        if n_theta > dim {
            return Err(PceError::DimensionMismatch {
                what: "parameter dimensions",
                expected: dim,
                found: n_theta,
            });
        }
        if coefficients.len() != n_outputs * index_set.len() {
            return Err(PceError::DimensionMismatch {
                what: "coefficient matrix",
                expected: n_outputs * index_set.len(),
                found: coefficients.len(),
            });
        }
        for m in &maps {
            AffineMap::new(m.gamma, m.delta)?;
        }
        let mut theta_parts: Vec<Vec<u32>> = Vec::new();
        let mut term_theta_part = Vec::with_capacity(index_set.len());
        for b in index_set.indices() {
            let part = &b.entries()[..n_theta];
            let id = match theta_parts.iter().position(|p| p.as_slice() == part) {
                Some(id) => id,
                None => {
                    theta_parts.push(part.to_vec());
                    theta_parts.len() - 1
                }
            };
            term_theta_part.push(id);
        }
        let max_degree = index_set.max_entry() as usize;
        Ok(PCExpansion {
            index_set,
            n_theta,
            maps,
            n_outputs,
            coefficients,
            log_space,
            max_degree,
            theta_parts,
            term_theta_part,
        })
    }

    pub fn index_set(&self) -> &IndexSet {
        &self.index_set
    }

    pub fn maps(&self) -> &[AffineMap] {
        &self.maps
    }

    pub fn n_outputs(&self) -> usize {
        self.n_outputs
    }

    pub fn dimension(&self) -> usize {
        self.index_set.dimension()
    }

    pub fn log_space(&self) -> bool {
        self.log_space
    }

    pub fn n_terms(&self) -> usize {
        self.index_set.len()
    }

    /// Coefficient row for output `c`.
    pub fn coefficients(&self, c: usize) -> &[f64] {
        let t = self.n_terms();
        &self.coefficients[c * t..(c + 1) * t]
    }

    /// Physical bounds `[γ - |δ|, γ + |δ|]` of each parameter dimension.
    pub fn theta_bounds(&self) -> Vec<(f64, f64)> {
        self.maps[..self.n_theta]
            .iter()
            .map(|m| (m.gamma - m.delta.abs(), m.gamma + m.delta.abs()))
            .collect()
    }

    /// Physical bounds of each design dimension.
    pub fn design_bounds(&self) -> Vec<(f64, f64)> {
        self.maps[self.n_theta..]
            .iter()
            .map(|m| (m.gamma - m.delta.abs(), m.gamma + m.delta.abs()))
            .collect()
    }

    fn standardize(&self, dim: usize, x: f64) -> Result<f64, PceError> {
        let xi = self.maps[dim].to_standard(x);
        if !xi.is_finite() || xi.abs() > 1.0 + DOMAIN_TOL {
            return Err(PceError::OutOfDomain { dim, value: x });
        }
        Ok(xi.clamp(-1.0, 1.0))
    }

    fn standard_point(&self, theta: &[f64], design: &[f64]) -> Result<Vec<f64>, PceError> {
        let n_d = self.dimension() - self.n_theta;
        if theta.len() != self.n_theta {
            return Err(PceError::DimensionMismatch {
                what: "parameter point",
                expected: self.n_theta,
                found: theta.len(),
            });
        }
        if design.len() != n_d {
            return Err(PceError::DimensionMismatch {
                what: "design point",
                expected: n_d,
                found: design.len(),
            });
        }
        theta
            .iter()
            .chain(design)
            .enumerate()
            .map(|(l, &x)| self.standardize(l, x))
            .collect()
    }

    /// Series value at a standardized point; no exponentiation.
    fn series_at(&self, xi: &[f64]) -> Vec<f64> {
        let p1 = self.max_degree + 1;
        let mut table = vec![0.0; xi.len() * p1];
        for (l, &x) in xi.iter().enumerate() {
            legendre_values(self.max_degree, x, &mut table[l * p1..(l + 1) * p1]);
        }
        let mut out = vec![0.0; self.n_outputs];
        let terms = self.n_terms();
        for (t, b) in self.index_set.indices().iter().enumerate() {
            let psi: f64 = b
                .entries()
                .iter()
                .enumerate()
                .map(|(l, &deg)| table[l * p1 + deg as usize])
                .product();
            for (c, o) in out.iter_mut().enumerate() {
                *o += self.coefficients[c * terms + t] * psi;
            }
        }
        out
    }

    /// `G(θ, d)` from the expansion, exponentiated when `log_space`.
    pub fn evaluate(&self, theta: &[f64], design: &[f64]) -> Result<Vec<f64>, PceError> {
        let xi = self.standard_point(theta, design)?;
        let mut out = self.series_at(&xi);
        if self.log_space {
            out.iter_mut().for_each(|v| *v = v.exp());
        }
        Ok(out)
    }

    /// Row-major `n_y × n_d` matrix of `∂G_c/∂d_a`, including the `1/δ` chain
    /// factor and, under `log_space`, the `exp(series)` factor.
    pub fn gradient_wrt_design(&self, theta: &[f64], design: &[f64]) -> Result<Vec<f64>, PceError> {
        let xi = self.standard_point(theta, design)?;
        let dim = xi.len();
        let n_d = dim - self.n_theta;
        let p1 = self.max_degree + 1;
        let mut vals = vec![0.0; dim * p1];
        let mut ders = vec![0.0; dim * p1];
        for (l, &x) in xi.iter().enumerate() {
            legendre_table(self.max_degree, x, &mut vals[l * p1..(l + 1) * p1], &mut ders[l * p1..(l + 1) * p1]);
        }
        let terms = self.n_terms();
        let mut jac = vec![0.0; self.n_outputs * n_d];
        for (t, b) in self.index_set.indices().iter().enumerate() {
            for a in 0..n_d {
                let la = self.n_theta + a;
                let mut dpsi = ders[la * p1 + b.entries()[la] as usize] / self.maps[la].delta;
                for (l, &deg) in b.entries().iter().enumerate() {
                    if l != la {
                        dpsi *= vals[l * p1 + deg as usize];
                    }
                }
                for c in 0..self.n_outputs {
                    jac[c * n_d + a] += self.coefficients[c * terms + t] * dpsi;
                }
            }
        }
        if self.log_space {
            let series = self.series_at(&xi);
            for c in 0..self.n_outputs {
                let g = series[c].exp();
                for a in 0..n_d {
                    jac[c * n_d + a] *= g;
                }
            }
        }
        Ok(jac)
    }

    /// Contracts the design dimensions at a fixed design, leaving a polynomial
    /// in `θ` for the value and for each design derivative.
    pub fn fix_design(&self, design: &[f64]) -> Result<FixedDesignExpansion<'_>, PceError> {
        let dim = self.dimension();
        let n_d = dim - self.n_theta;
        if design.len() != n_d {
            return Err(PceError::DimensionMismatch {
                what: "design",
                expected: n_d,
                found: design.len(),
            });
        }
        let p1 = self.max_degree + 1;
        let mut vals = vec![0.0; n_d * p1];
        let mut ders = vec![0.0; n_d * p1];
        for a in 0..n_d {
            let xi = self.standardize(self.n_theta + a, design[a])?;
            legendre_table(self.max_degree, xi, &mut vals[a * p1..(a + 1) * p1], &mut ders[a * p1..(a + 1) * p1]);
        }
        let parts = self.theta_parts.len();
        let terms = self.n_terms();
        let mut value_coef = vec![0.0; self.n_outputs * parts];
        let mut grad_coef = vec![0.0; n_d * self.n_outputs * parts];
        for (t, b) in self.index_set.indices().iter().enumerate() {
            let design_degrees = &b.entries()[self.n_theta..];
            let psi_d: f64 = design_degrees
                .iter()
                .enumerate()
                .map(|(a, &deg)| vals[a * p1 + deg as usize])
                .product();
            let k = self.term_theta_part[t];
            for c in 0..self.n_outputs {
                value_coef[c * parts + k] += self.coefficients[c * terms + t] * psi_d;
            }
            for a in 0..n_d {
                let mut dpsi = ders[a * p1 + design_degrees[a] as usize] / self.maps[self.n_theta + a].delta;
                for (a2, &deg) in design_degrees.iter().enumerate() {
                    if a2 != a {
                        dpsi *= vals[a2 * p1 + deg as usize];
                    }
                }
                for c in 0..self.n_outputs {
                    grad_coef[(a * self.n_outputs + c) * parts + k] += self.coefficients[c * terms + t] * dpsi;
                }
            }
        }
        Ok(FixedDesignExpansion {
            pce: self,
            n_d,
            value_coef,
            grad_coef,
        })
    }

    pub fn to_document(&self) -> ExpansionDocument {
        let terms = self.n_terms();
        ExpansionDocument {
            dimension: self.dimension(),
            n_theta: self.n_theta,
            degree: self.index_set.degree(),
            ordering: "grlex".to_string(),
            maps: self.maps.clone(),
            outputs: self.n_outputs,
            log_space: self.log_space,
            coefficients: self.coefficients.chunks(terms.max(1)).map(<[f64]>::to_vec).collect(),
        }
    }

    pub fn from_document(doc: ExpansionDocument) -> Result<Self, PceError> {
        if doc.ordering != "grlex" {
            return Err(PceError::Format(format!("unsupported ordering {:?}", doc.ordering)));
        }
        if doc.coefficients.len() != doc.outputs {
            return Err(PceError::Format(format!(
                "expected {} coefficient rows, found {}",
                doc.outputs,
                doc.coefficients.len()
            )));
        }
        let index_set = total_order_index_set(doc.dimension, doc.degree)?;
        if let Some(row) = doc.coefficients.iter().find(|r| r.len() != index_set.len()) {
            return Err(PceError::Format(format!(
                "coefficient row has {} entries, index set has {}",
                row.len(),
                index_set.len()
            )));
        }
        let coefficients = doc.coefficients.concat();
        PCExpansion::new(index_set, doc.n_theta, doc.maps, doc.outputs, coefficients, doc.log_space)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("expansion document serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, PceError> {
        let doc: ExpansionDocument = serde_json::from_str(text).map_err(|e| PceError::Format(e.to_string()))?;
        Self::from_document(doc)
    }
}

/// On-disk form of a [`PCExpansion`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionDocument {
    pub dimension: usize,
    pub n_theta: usize,
    pub degree: u32,
    pub ordering: String,
    pub maps: Vec<AffineMap>,
    pub outputs: usize,
    pub log_space: bool,
    pub coefficients: Vec<Vec<f64>>,
}

/// An expansion with its design dimensions contracted at one design point.
pub struct FixedDesignExpansion<'a> {
    pce: &'a PCExpansion,
    n_d: usize,
    /// `n_outputs × parts`
    value_coef: Vec<f64>,
    /// `n_d × n_outputs × parts`
    grad_coef: Vec<f64>,
}

impl FixedDesignExpansion<'_> {
    fn with_theta_table<R>(&self, theta: &[f64], f: impl FnOnce(&[f64]) -> R) -> Result<R, ModelError> {
        let pce = self.pce;
        check_len("theta", pce.n_theta, theta.len())?;
        let p1 = pce.max_degree + 1;
        let need = pce.n_theta * p1;
        let mut stack = [0.0f64; 96];
        let mut heap;
        let table: &mut [f64] = if need <= stack.len() {
            &mut stack[..need]
        } else {
            heap = vec![0.0; need];
            &mut heap
        };
        for (l, &x) in theta.iter().enumerate() {
            let xi = pce
                .standardize(l, x)
                .map_err(|_| ModelError::OutOfDomain { dim: l, value: x })?;
            legendre_values(pce.max_degree, xi, &mut table[l * p1..(l + 1) * p1]);
        }
        Ok(f(table))
    }

    #[inline]
    fn theta_basis(&self, table: &[f64], k: usize) -> f64 {
        let p1 = self.pce.max_degree + 1;
        self.pce.theta_parts[k]
            .iter()
            .enumerate()
            .map(|(l, &deg)| table[l * p1 + deg as usize])
            .product()
    }
}

impl DesignSlice for FixedDesignExpansion<'_> {
    fn value_into(&self, theta: &[f64], out: &mut [f64]) -> Result<(), ModelError> {
        let n_y = self.pce.n_outputs;
        check_len("output buffer", n_y, out.len())?;
        let parts = self.pce.theta_parts.len();
        self.with_theta_table(theta, |table| {
            out.iter_mut().for_each(|o| *o = 0.0);
            for k in 0..parts {
                let psi = self.theta_basis(table, k);
                for (c, o) in out.iter_mut().enumerate() {
                    *o += self.value_coef[c * parts + k] * psi;
                }
            }
            if self.pce.log_space {
                out.iter_mut().for_each(|v| *v = v.exp());
            }
        })
    }

    fn value_and_jacobian_into(&self, theta: &[f64], out: &mut [f64], jac: &mut [f64]) -> Result<(), ModelError> {
        let n_y = self.pce.n_outputs;
        let n_d = self.n_d;
        check_len("output buffer", n_y, out.len())?;
        check_len("jacobian buffer", n_y * n_d, jac.len())?;
        let parts = self.pce.theta_parts.len();
        self.with_theta_table(theta, |table| {
            out.iter_mut().for_each(|o| *o = 0.0);
            jac.iter_mut().for_each(|j| *j = 0.0);
            for k in 0..parts {
                let psi = self.theta_basis(table, k);
                for (c, o) in out.iter_mut().enumerate() {
                    *o += self.value_coef[c * parts + k] * psi;
                }
                for a in 0..n_d {
                    for c in 0..n_y {
                        jac[c * n_d + a] += self.grad_coef[(a * n_y + c) * parts + k] * psi;
                    }
                }
            }
            if self.pce.log_space {
                for c in 0..n_y {
                    out[c] = out[c].exp();
                    for a in 0..n_d {
                        jac[c * n_d + a] *= out[c];
                    }
                }
            }
        })
    }
}

impl ForwardModel for PCExpansion {
    fn n_theta(&self) -> usize {
        self.n_theta
    }

    fn n_design(&self) -> usize {
        self.dimension() - self.n_theta
    }

    fn n_outputs(&self) -> usize {
        self.n_outputs
    }

    fn value(&self, theta: &[f64], design: &[f64]) -> Result<Vec<f64>, ModelError> {
        self.evaluate(theta, design).map_err(ModelError::from)
    }

    fn has_design_gradient(&self) -> bool {
        true
    }

    fn design_gradient(&self, theta: &[f64], design: &[f64]) -> Result<Vec<f64>, ModelError> {
        self.gradient_wrt_design(theta, design).map_err(ModelError::from)
    }

    fn at_design<'a>(&'a self, design: &[f64]) -> Result<Box<dyn DesignSlice + 'a>, ModelError> {
        Ok(Box::new(self.fix_design(design)?))
    }
}

impl From<PceError> for ModelError {
    fn from(e: PceError) -> Self {
        match e {
            PceError::OutOfDomain { dim, value } => ModelError::OutOfDomain { dim, value },
            PceError::DimensionMismatch { what, expected, found } => {
                ModelError::DimensionMismatch { what, expected, found }
            }
            other => ModelError::InvalidConfig(other.to_string()),
        }
    }
}

/// Non-intrusive spectral projection
///
/// ```text
/// g_{c,b} = Σ_q w_q f_c(x(ξ_q)) Ψ_b(ξ_q) / E[Ψ_b²]
/// ```
///
/// where `f_c` is the model output (or its logarithm under `log_space`) at the
/// physically mapped node. The model is evaluated at every node, in parallel;
/// accumulation runs in node order.
pub fn project<F>(
    model: F,
    index_set: &IndexSet,
    rule: &QuadratureRule,
    maps: &[AffineMap],
    n_theta: usize,
    log_space: bool,
) -> Result<PCExpansion, PceError>
where
    F: Fn(&[f64], &[f64]) -> Vec<f64> + Sync,
{
    let dim = index_set.dimension();
    if rule.dim() != dim || maps.len() != dim {
        return Err(PceError::DimensionMismatch {
            what: "rule/maps dimension",
            expected: dim,
            found: if rule.dim() != dim { rule.dim() } else { maps.len() },
        });
    }
    if n_theta > dim {
        return Err(PceError::DimensionMismatch {
            what: "parameter dimensions",
            expected: dim,
            found: n_theta,
        });
    }
    let outputs: Vec<Vec<f64>> = (0..rule.len())
        .into_par_iter()
        .map(|q| {
            let physical: Vec<f64> = rule.node(q).iter().zip(maps).map(|(&xi, m)| m.to_physical(xi)).collect();
            model(&physical[..n_theta], &physical[n_theta..])
        })
        .collect();
    let n_outputs = outputs.first().map_or(0, Vec::len);

    let max_degree = index_set.max_entry() as usize;
    let p1 = max_degree + 1;
    let terms = index_set.len();
    let mut coefficients = vec![0.0; n_outputs * terms];
    let mut table = vec![0.0; dim * p1];
    for (q, out) in outputs.iter().enumerate() {
        let node = rule.node(q);
        if out.len() != n_outputs {
            return Err(PceError::DimensionMismatch {
                what: "model output",
                expected: n_outputs,
                found: out.len(),
            });
        }
        let physical = || node.iter().zip(maps).map(|(&xi, m)| m.to_physical(xi)).collect::<Vec<_>>();
        let mut f = out.clone();
        for (c, v) in f.iter_mut().enumerate() {
            if !v.is_finite() {
                return Err(PceError::NonFiniteOutput {
                    node: physical(),
                    output: c,
                    value: *v,
                });
            }
            if log_space {
                if *v <= 0.0 {
                    return Err(PceError::NonPositiveOutput {
                        node: physical(),
                        output: c,
                        value: *v,
                    });
                }
                *v = v.ln();
            }
        }
        for (l, &xi) in node.iter().enumerate() {
            legendre_values(max_degree, xi, &mut table[l * p1..(l + 1) * p1]);
        }
        let w = rule.weights()[q];
        for (t, b) in index_set.indices().iter().enumerate() {
            let psi: f64 = b
                .entries()
                .iter()
                .enumerate()
                .map(|(l, &deg)| table[l * p1 + deg as usize])
                .product();
            for c in 0..n_outputs {
                coefficients[c * terms + t] += w * f[c] * psi;
            }
        }
    }
    for (t, b) in index_set.indices().iter().enumerate() {
        let norm = b.norm_squared();
        for c in 0..n_outputs {
            coefficients[c * terms + t] /= norm;
        }
    }
    PCExpansion::new(index_set.clone(), n_theta, maps.to_vec(), n_outputs, coefficients, log_space)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polychaos::{tensor_quadrature, total_order_index_set};
    use approx::assert_relative_eq;

    fn unit_maps(dim: usize) -> Vec<AffineMap> {
        vec![AffineMap::new(0.0, 1.0).unwrap(); dim]
    }

    fn coef_of(pce: &PCExpansion, c: usize, entries: &[u32]) -> f64 {
        let t = pce
            .index_set()
            .indices()
            .iter()
            .position(|b| b.entries() == entries)
            .unwrap();
        pce.coefficients(c)[t]
    }

    #[test]
    fn affine_round_trip() {
        let m = AffineMap::from_interval(0.2, 3.7).unwrap();
        for &x in &[0.2, 1.0, 3.7, 2.2222] {
            assert_relative_eq!(m.to_physical(m.to_standard(x)), x, epsilon = 1e-15);
        }
        assert!(AffineMap::new(1.0, 0.0).is_err());
    }

    #[test]
    fn projects_constant() {
        let set = total_order_index_set(3, 3).unwrap();
        let rule = tensor_quadrature(&[2, 2, 2]).unwrap();
        let pce = project(|_, _| vec![3.0], &set, &rule, &unit_maps(3), 2, false).unwrap();
        assert_relative_eq!(coef_of(&pce, 0, &[0, 0, 0]), 3.0, epsilon = 1e-14);
        for (t, b) in pce.index_set().indices().iter().enumerate().skip(1) {
            assert!(pce.coefficients(0)[t].abs() < 1e-12, "{b:?}");
        }
        let v = pce.evaluate(&[0.3, -0.9], &[0.1]).unwrap();
        assert_relative_eq!(v[0], 3.0, epsilon = 1e-13);
        let g = pce.gradient_wrt_design(&[0.3, -0.9], &[0.1]).unwrap();
        assert!(g.iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn projects_linear_and_quadratic() {
        let set = total_order_index_set(2, 3).unwrap();
        let rule = tensor_quadrature(&[2, 2]).unwrap();
        let pce = project(|t, _| vec![t[0], t[0] * t[0]], &set, &rule, &unit_maps(2), 1, false).unwrap();
        assert_relative_eq!(coef_of(&pce, 0, &[1, 0]), 1.0, epsilon = 1e-14);
        assert_relative_eq!(coef_of(&pce, 1, &[0, 0]), 1.0 / 3.0, epsilon = 1e-14);
        assert_relative_eq!(coef_of(&pce, 1, &[2, 0]), 2.0 / 3.0, epsilon = 1e-14);
        let v = pce.evaluate(&[0.5], &[0.0]).unwrap();
        assert_relative_eq!(v[1], 0.25, epsilon = 1e-14);
    }

    #[test]
    fn log_space_single_term() {
        let set = total_order_index_set(2, 2).unwrap();
        let mut coefficients = vec![0.0; set.len()];
        coefficients[0] = 0.7;
        let pce = PCExpansion::new(set, 1, unit_maps(2), 1, coefficients, true).unwrap();
        for &(t, d) in &[(0.0, 0.0), (-1.0, 1.0), (0.4, -0.3)] {
            assert_relative_eq!(pce.evaluate(&[t], &[d]).unwrap()[0], 0.7f64.exp(), epsilon = 1e-15);
        }
    }

    #[test]
    fn log_space_projection_rejects_non_positive() {
        let set = total_order_index_set(2, 2).unwrap();
        let rule = tensor_quadrature(&[1, 1]).unwrap();
        let err = project(|t, _| vec![t[0]], &set, &rule, &unit_maps(2), 1, true).unwrap_err();
        assert!(matches!(err, PceError::NonPositiveOutput { .. }));
    }

    #[test]
    fn non_finite_output_reports_node() {
        let set = total_order_index_set(2, 2).unwrap();
        let rule = tensor_quadrature(&[1, 1]).unwrap();
        let maps = vec![AffineMap::from_interval(0.0, 1.0).unwrap(); 2];
        let err = project(
            |t, d| vec![if t[0] == 1.0 && d[0] == 0.0 { f64::NAN } else { 1.0 }],
            &set,
            &rule,
            &maps,
            1,
            false,
        )
        .unwrap_err();
        match err {
            PceError::NonFiniteOutput { node, .. } => assert_eq!(node, vec![1.0, 0.0]),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn design_derivative_uses_chain_factor() {
        // f = ξ_design with d = 0.5 + 0.5 ξ, so ∂f/∂d = 2
        let set = total_order_index_set(2, 1).unwrap();
        let maps = vec![AffineMap::new(0.0, 1.0).unwrap(), AffineMap::new(0.5, 0.5).unwrap()];
        let coefficients = vec![0.0, 0.0, 1.0];
        let pce = PCExpansion::new(set, 1, maps, 1, coefficients, false).unwrap();
        let g = pce.gradient_wrt_design(&[0.1], &[0.3]).unwrap();
        assert_relative_eq!(g[0], 2.0, epsilon = 1e-15);
    }

    #[test]
    fn out_of_domain_rejected() {
        let set = total_order_index_set(2, 1).unwrap();
        let pce = PCExpansion::new(set, 1, unit_maps(2), 1, vec![1.0, 0.0, 0.0], false).unwrap();
        assert!(matches!(pce.evaluate(&[1.01], &[0.0]), Err(PceError::OutOfDomain { dim: 0, .. })));
        assert!(pce.evaluate(&[1.0 + 1e-10], &[0.0]).is_ok());
        assert!(pce.fix_design(&[-1.5]).is_err());
    }

    #[test]
    fn fixed_design_agrees_with_direct_path() {
        let set = total_order_index_set(4, 4).unwrap();
        let n = set.len();
        let coefficients: Vec<f64> = (0..2 * n).map(|i| ((i * 7919) % 113) as f64 / 113.0 - 0.5).collect();
        let maps = vec![AffineMap::from_interval(0.0, 1.0).unwrap(); 4];
        for log_space in [false, true] {
            let pce = PCExpansion::new(set.clone(), 2, maps.clone(), 2, coefficients.clone(), log_space).unwrap();
            let d = [0.31, 0.77];
            let fixed = pce.fix_design(&d).unwrap();
            let theta = [0.12, 0.93];
            let mut out = [0.0; 2];
            let mut jac = [0.0; 4];
            fixed.value_and_jacobian_into(&theta, &mut out, &mut jac).unwrap();
            let direct = pce.evaluate(&theta, &d).unwrap();
            let direct_jac = pce.gradient_wrt_design(&theta, &d).unwrap();
            for c in 0..2 {
                assert_relative_eq!(out[c], direct[c], max_relative = 1e-12);
            }
            for k in 0..4 {
                assert_relative_eq!(jac[k], direct_jac[k], max_relative = 1e-11, epsilon = 1e-13);
            }
            let mut only = [0.0; 2];
            fixed.value_into(&theta, &mut only).unwrap();
            assert_eq!(only, out);
        }
    }

    #[test]
    fn json_round_trip() {
        let set = total_order_index_set(3, 2).unwrap();
        let coefficients: Vec<f64> = (0..2 * set.len()).map(|i| i as f64 * 0.25 - 1.0).collect();
        let maps = vec![
            AffineMap::from_interval(0.0, 1.0).unwrap(),
            AffineMap::from_interval(-2.0, 2.0).unwrap(),
            AffineMap::from_interval(0.0, 1.0).unwrap(),
        ];
        let pce = PCExpansion::new(set, 2, maps, 2, coefficients, false).unwrap();
        let text = pce.to_json();
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(value["ordering"], "grlex");
        assert_eq!(value["dimension"], 3);
        assert_eq!(value["outputs"], 2);
        assert_eq!(value["coefficients"].as_array().unwrap().len(), 2);
        let back = PCExpansion::from_json(&text).unwrap();
        assert_eq!(back.to_document(), pce.to_document());
        assert!(PCExpansion::from_json(&text.replace("grlex", "lex")).is_err());
    }
}
