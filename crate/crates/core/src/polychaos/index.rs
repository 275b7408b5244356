use serde::{Deserialize, Serialize};

use super::PceError;

/// Multi-index of per-dimension polynomial degrees.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(entries: Vec<u32>) -> Self {
        MultiIndex(entries)
    }

    pub fn zero(dim: usize) -> Self {
        MultiIndex(vec![0; dim])
    }

    pub fn entries(&self) -> &[u32] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// `|b|₁`
    pub fn total_order(&self) -> u32 {
        self.0.iter().sum()
    }

    /// `E[Ψ_b²] = Π_j 1 / (2 b_j + 1)` for the unnormalized Legendre basis.
    pub fn norm_squared(&self) -> f64 {
        self.0.iter().map(|&b| 1.0 / (2.0 * b as f64 + 1.0)).product()
    }
}

/// Ordered collection of multi-indices sharing one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexSet {
    indices: Vec<MultiIndex>,
    degree: u32,
    dimension: usize,
}

impl IndexSet {
    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Largest single-dimension degree appearing in the set.
    pub fn max_entry(&self) -> u32 {
        self.indices
            .iter()
            .flat_map(|b| b.entries().iter().copied())
            .max()
            .unwrap_or(0)
    }
}

/// All multi-indices with `|b|₁ ≤ p` in graded lexicographic order: ascending
/// total degree, and within one degree, larger leading entries first.
pub fn total_order_index_set(dimension: usize, degree: u32) -> Result<IndexSet, PceError> {
    if dimension == 0 {
        return Err(PceError::ZeroDimension);
    }
    let mut indices = Vec::new();
    let mut scratch = vec![0u32; dimension];
    for total in 0..=degree {
        compositions(total, 0, &mut scratch, &mut indices);
    }
    Ok(IndexSet {
        indices,
        degree,
        dimension,
    })
}

fn compositions(remaining: u32, pos: usize, scratch: &mut [u32], out: &mut Vec<MultiIndex>) {
    if pos + 1 == scratch.len() {
        scratch[pos] = remaining;
        out.push(MultiIndex(scratch.to_vec()));
        return;
    }
    for first in (0..=remaining).rev() {
        scratch[pos] = first;
        compositions(remaining - first, pos + 1, scratch, out);
    }
}

/// `C(n, k)`, exact for the small arguments used in index-set sizing.
pub fn binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) / (i + 1))
}
