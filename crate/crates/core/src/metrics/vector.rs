use std::collections::HashSet;

use crate::taxonomy::AttributeVector;

use super::MetricError;

fn same_len(x: &AttributeVector, y: &AttributeVector) -> Result<(), MetricError> {
    if x.len() != y.len() {
        return Err(MetricError::Length {
            left: x.len(),
            right: y.len(),
        });
    }
    Ok(())
}

/// `|x ∧ y| / |x ∨ y|`; two all-zero vectors agree perfectly (1.0).
pub fn jaccard(x: &AttributeVector, y: &AttributeVector) -> Result<f64, MetricError> {
    same_len(x, y)?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&a, &b) in x.bits().iter().zip(y.bits()) {
        inter += usize::from(a && b);
        union += usize::from(a || b);
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// Fraction of positions where the vectors differ.
pub fn hamming(x: &AttributeVector, y: &AttributeVector) -> Result<f64, MetricError> {
    same_len(x, y)?;
    if x.is_empty() {
        return Ok(0.0);
    }
    let diff = x.bits().iter().zip(y.bits()).filter(|(a, b)| a != b).count();
    Ok(diff as f64 / x.len() as f64)
}

/// Distinct vectors divided by batch size.
pub fn diversity(batch: &[AttributeVector]) -> Result<f64, MetricError> {
    if batch.is_empty() {
        return Err(MetricError::EmptyBatch);
    }
    let unique: HashSet<&AttributeVector> = batch.iter().collect();
    Ok(unique.len() as f64 / batch.len() as f64)
}

/// Symmetric pair counts; the diagonal holds attribute marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct CooccurrenceMatrix {
    dim: usize,
    counts: Vec<f64>,
}

impl CooccurrenceMatrix {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.counts[i * self.dim + j]
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            dim: self.dim,
            counts: self.counts.iter().map(|v| v * factor).collect(),
        }
    }

    fn upper_triangle(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.dim).flat_map(move |i| (i + 1..self.dim).map(move |j| self.get(i, j)))
    }
}

pub fn cooccurrence(dataset: &[AttributeVector]) -> Result<CooccurrenceMatrix, MetricError> {
    let dim = dataset.first().ok_or(MetricError::EmptyBatch)?.len();
    let mut counts = vec![0.0; dim * dim];
    for v in dataset {
        if v.len() != dim {
            return Err(MetricError::Length {
                left: dim,
                right: v.len(),
            });
        }
        let ones: Vec<usize> = v.ones_indices().collect();
        for &i in &ones {
            for &j in &ones {
                counts[i * dim + j] += 1.0;
            }
        }
    }
    Ok(CooccurrenceMatrix { dim, counts })
}

/// Cosine similarity of the strict upper triangles (diagonal excluded).
pub fn cooccurrence_cosine(a: &CooccurrenceMatrix, b: &CooccurrenceMatrix) -> Result<f64, MetricError> {
    if a.dim != b.dim {
        return Err(MetricError::Dimension {
            left: a.dim,
            right: b.dim,
        });
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.upper_triangle().zip(b.upper_triangle()) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(MetricError::ZeroMatrix);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(0.0, 1.0))
}
