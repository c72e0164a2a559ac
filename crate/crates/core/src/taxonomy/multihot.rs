use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{ConceptTaxonomy, TaxonomyError};

/// Binary presence vector over the taxonomy's attribute dimensions.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "Vec<u8>", into = "Vec<u8>")]
pub struct AttributeVector {
    bits: Vec<bool>,
}

impl AttributeVector {
    pub fn zeros(dim: usize) -> Self {
        Self { bits: vec![false; dim] }
    }

    pub fn ones(dim: usize) -> Self {
        Self { bits: vec![true; dim] }
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn from_indices(dim: usize, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut v = Self::zeros(dim);
        for i in indices {
            v.bits[i] = true;
        }
        v
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn set(&mut self, i: usize, on: bool) {
        self.bits[i] = on;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn popcount(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Indices of set bits, ascending.
    pub fn ones_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i)
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }
}

impl From<Vec<u8>> for AttributeVector {
    fn from(raw: Vec<u8>) -> Self {
        Self {
            bits: raw.into_iter().map(|b| b != 0).collect(),
        }
    }
}

impl From<AttributeVector> for Vec<u8> {
    fn from(v: AttributeVector) -> Self {
        v.bits.into_iter().map(u8::from).collect()
    }
}

pub fn encode_multihot<S: AsRef<str>>(
    attributes: impl IntoIterator<Item = S>,
    taxonomy: &ConceptTaxonomy,
) -> Result<AttributeVector, TaxonomyError> {
    let mut v = AttributeVector::zeros(taxonomy.dim());
    for a in attributes {
        let a = a.as_ref();
        let i = taxonomy
            .index_of(a)
            .ok_or_else(|| TaxonomyError::UnknownAttribute(a.to_string()))?;
        v.set(i, true);
    }
    Ok(v)
}

/// Attribute names of the set bits, in index order.
pub fn decode_multihot(vector: &AttributeVector, taxonomy: &ConceptTaxonomy) -> Result<Vec<String>, TaxonomyError> {
    if vector.len() != taxonomy.dim() {
        return Err(TaxonomyError::Dimension {
            expected: taxonomy.dim(),
            got: vector.len(),
        });
    }
    Ok(vector.ones_indices().map(|i| taxonomy.attribute(i).to_string()).collect())
}

/// Same as [`decode_multihot`] but as a set.
pub fn decode_set(vector: &AttributeVector, taxonomy: &ConceptTaxonomy) -> Result<BTreeSet<String>, TaxonomyError> {
    Ok(decode_multihot(vector, taxonomy)?.into_iter().collect())
}
