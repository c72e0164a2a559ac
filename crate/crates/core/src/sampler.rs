//! Unconditional and seed-conditioned attribute generation from a trained VAE.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::io;
use crate::nncore::{Rng, NnError};
use crate::taxonomy::{decode_multihot, AttributeVector, ConceptTaxonomy, TaxonomyError};
use crate::vae::{reparameterize, VaeError, VaeModel};

#[derive(Debug, thiserror::Error)]
pub enum SamplerError {
    #[error(transparent)]
    Vae(#[from] VaeError),
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
    #[error("seed spec forces attributes both on and off: {}", .0.join(", "))]
    Contradictory(Vec<String>),
    #[error("seed spec cannot meet attribute bounds: {0}")]
    Infeasible(String),
    #[error("invalid sampler setting: {0}")]
    Config(String),
    #[error("draw {draw}: no vector within attribute bounds after {attempts} attempts")]
    Exhausted { draw: usize, attempts: usize },
    #[error("{vectors} vectors but {captions} captions")]
    Length { vectors: usize, captions: usize },
}

impl From<NnError> for SamplerError {
    fn from(e: NnError) -> Self {
        SamplerError::Vae(e.into())
    }
}

/// Partial attribute specification for conditional generation.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedSpec {
    pub forced_on: BTreeSet<String>,
    pub forced_off: BTreeSet<String>,
}

impl SeedSpec {
    pub fn new<I, J, S, T>(on: I, off: J) -> Self
    where
        I: IntoIterator<Item = S>,
        J: IntoIterator<Item = T>,
        S: Into<String>,
        T: Into<String>,
    {
        Self {
            forced_on: on.into_iter().map(Into::into).collect(),
            forced_off: off.into_iter().map(Into::into).collect(),
        }
    }

    pub fn validate(&self, taxonomy: &ConceptTaxonomy) -> Result<(), SamplerError> {
        let both: Vec<String> = self.forced_on.intersection(&self.forced_off).cloned().collect();
        if !both.is_empty() {
            return Err(SamplerError::Contradictory(both));
        }
        for a in self.forced_on.iter().chain(&self.forced_off) {
            if !taxonomy.contains(a) {
                return Err(TaxonomyError::UnknownAttribute(a.clone()).into());
            }
        }
        Ok(())
    }

    /// Forced-on bits as a vector (the encoder input).
    pub fn seed_vector(&self, taxonomy: &ConceptTaxonomy) -> Result<AttributeVector, SamplerError> {
        self.validate(taxonomy)?;
        Ok(crate::taxonomy::encode_multihot(&self.forced_on, taxonomy)?)
    }

    pub fn is_satisfied_by(&self, v: &AttributeVector, taxonomy: &ConceptTaxonomy) -> bool {
        let on = |a: &String| taxonomy.index_of(a).is_some_and(|i| v.get(i));
        self.forced_on.iter().all(on) && !self.forced_off.iter().any(on)
    }
}

/// Binarization rule for decoder probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    Fixed(f64),
    TopK(usize),
}

impl ThresholdMode {
    pub fn validate(&self, dim: usize) -> Result<(), SamplerError> {
        match *self {
            ThresholdMode::Fixed(t) if !(t > 0.0 && t < 1.0) => {
                Err(SamplerError::Config(format!("threshold {t} outside (0, 1)")))
            }
            ThresholdMode::TopK(k) if k > dim => Err(SamplerError::Config(format!("top-k {k} exceeds dimension {dim}"))),
            _ => Ok(()),
        }
    }
}

/// Fixed: `bit_i = p_i > θ`. Top-k: the k largest probabilities, ties to the lower index.
pub fn threshold_vector(p: &[f64], mode: ThresholdMode) -> Result<AttributeVector, SamplerError> {
    mode.validate(p.len())?;
    Ok(match mode {
        ThresholdMode::Fixed(t) => crate::vae::threshold_fixed(p, t),
        ThresholdMode::TopK(k) => {
            let mut order: Vec<usize> = (0..p.len()).collect();
            // stable sort keeps lower indices first among equal values
            order.sort_by(|&a, &b| p[b].total_cmp(&p[a]));
            AttributeVector::from_indices(p.len(), order.into_iter().take(k))
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub threshold: ThresholdMode,
    pub min_attrs: usize,
    pub max_attrs: usize,
    /// Draw attempts per vector before giving up.
    pub max_attempts: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            threshold: ThresholdMode::Fixed(0.5),
            min_attrs: 2,
            max_attrs: 12,
            max_attempts: 200,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    /// No popcount bounds; every first draw is kept.
    pub fn unbounded(threshold: ThresholdMode, seed: u64) -> Self {
        Self {
            threshold,
            min_attrs: 0,
            max_attrs: usize::MAX,
            max_attempts: 1,
            seed,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<(), SamplerError> {
        self.threshold.validate(dim)?;
        if self.min_attrs > self.max_attrs {
            return Err(SamplerError::Config(format!(
                "min_attrs {} exceeds max_attrs {}",
                self.min_attrs, self.max_attrs
            )));
        }
        if self.max_attempts == 0 {
            return Err(SamplerError::Config("max_attempts must be >= 1".into()));
        }
        if let ThresholdMode::TopK(k) = self.threshold {
            if k < self.min_attrs || k > self.max_attrs {
                return Err(SamplerError::Config(format!(
                    "top-k {k} lies outside [{}, {}]",
                    self.min_attrs, self.max_attrs
                )));
            }
        }
        Ok(())
    }

    fn in_bounds(&self, v: &AttributeVector) -> bool {
        (self.min_attrs..=self.max_attrs).contains(&v.popcount())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleMode {
    Unconditional,
    Conditional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub model_hash: String,
    pub seed: u64,
    pub mode: SampleMode,
    pub seed_spec: Option<SeedSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationBatch {
    pub vectors: Vec<AttributeVector>,
    pub provenance: Provenance,
    /// Draws discarded for falling outside the attribute bounds.
    pub rejections: usize,
}

/// SHA-256 over the model's parameters (little-endian f64 bytes).
pub fn model_fingerprint(model: &VaeModel) -> String {
    let bytes: Vec<u8> = model.flat_params().iter().flat_map(|v| v.to_le_bytes()).collect();
    io::sha256_hex(&bytes)
}

fn draw_loop(
    n: usize,
    config: &SamplerConfig,
    mut draw: impl FnMut(&mut Rng) -> Result<AttributeVector, SamplerError>,
) -> Result<(Vec<AttributeVector>, usize), SamplerError> {
    let mut vectors = Vec::with_capacity(n);
    let mut rejections = 0;
    for i in 0..n {
        let mut rng = Rng::substream(config.seed, i as u64);
        let mut accepted = None;
        for _ in 0..config.max_attempts {
            let v = draw(&mut rng)?;
            if config.in_bounds(&v) {
                accepted = Some(v);
                break;
            }
            rejections += 1;
        }
        match accepted {
            Some(v) => vectors.push(v),
            None => {
                return Err(SamplerError::Exhausted {
                    draw: i,
                    attempts: config.max_attempts,
                })
            }
        }
    }
    if rejections > 0 {
        log::info!("sampler rejected {rejections} draws outside [{}, {}] attributes", config.min_attrs, config.max_attrs);
    }
    Ok((vectors, rejections))
}

/// `n` draws `z ~ N(0, I)`, decoded and binarized. Draw `i` uses the random
/// sub-stream `(seed, i)`, so batches are reproducible draw by draw.
pub fn sample_unconditional(model: &VaeModel, n: usize, config: &SamplerConfig) -> Result<GenerationBatch, SamplerError> {
    config.validate(model.input_dim())?;
    let latent = model.latent_dim();
    let (vectors, rejections) = draw_loop(n, config, |rng| {
        let z = crate::nncore::sample_standard_normal(rng, latent);
        threshold_vector(&model.decode(&z)?, config.threshold)
    })?;
    Ok(GenerationBatch {
        vectors,
        provenance: Provenance {
            model_hash: model_fingerprint(model),
            seed: config.seed,
            mode: SampleMode::Unconditional,
            seed_spec: None,
        },
        rejections,
    })
}

/// Encodes the seed vector, samples the posterior, decodes, binarizes, then
/// clamps forced bits.
pub fn sample_conditional(
    model: &VaeModel,
    spec: &SeedSpec,
    taxonomy: &ConceptTaxonomy,
    n: usize,
    config: &SamplerConfig,
) -> Result<GenerationBatch, SamplerError> {
    let dim = model.input_dim();
    if taxonomy.dim() != dim {
        return Err(VaeError::Dimension {
            what: "taxonomy",
            expected: dim,
            got: taxonomy.dim(),
        }
        .into());
    }
    config.validate(dim)?;
    let seed = spec.seed_vector(taxonomy)?;
    if spec.forced_on.len() > config.max_attrs {
        return Err(SamplerError::Infeasible(format!(
            "{} forced-on attributes exceed max_attrs {}",
            spec.forced_on.len(),
            config.max_attrs
        )));
    }
    if dim - spec.forced_off.len() < config.min_attrs {
        return Err(SamplerError::Infeasible(format!(
            "only {} attributes may be on, min_attrs is {}",
            dim - spec.forced_off.len(),
            config.min_attrs
        )));
    }
    let on: Vec<usize> = seed.ones_indices().collect();
    let off: Vec<usize> = spec.forced_off.iter().filter_map(|a| taxonomy.index_of(a)).collect();
    let (mu, logvar) = model.encode(&seed)?;
    let (vectors, rejections) = draw_loop(n, config, |rng| {
        let z = reparameterize(&mu, &logvar, rng)?;
        let mut v = threshold_vector(&model.decode(&z)?, config.threshold)?;
        for &i in &on {
            v.set(i, true);
        }
        for &i in &off {
            v.set(i, false);
        }
        Ok(v)
    })?;
    Ok(GenerationBatch {
        vectors,
        provenance: Provenance {
            model_hash: model_fingerprint(model),
            seed: config.seed,
            mode: SampleMode::Conditional,
            seed_spec: Some(spec.clone()),
        },
        rejections,
    })
}

/// Share of vectors with each bit set.
pub fn marginal_frequencies(vectors: &[AttributeVector]) -> Vec<f64> {
    let Some(first) = vectors.first() else {
        return Vec::new();
    };
    let mut freq = vec![0.0; first.len()];
    for v in vectors {
        for i in v.ones_indices() {
            freq[i] += 1.0;
        }
    }
    let n = vectors.len() as f64;
    freq.iter_mut().for_each(|f| *f /= n);
    freq
}

/// One synthesized sample: attributes, caption and where it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    pub attributes: Vec<String>,
    pub caption: String,
    pub provenance: Provenance,
}

pub fn assemble_records<S: AsRef<str>>(
    batch: &GenerationBatch,
    captions: &[S],
    taxonomy: &ConceptTaxonomy,
    id_prefix: &str,
) -> Result<Vec<DatasetRecord>, SamplerError> {
    if captions.len() != batch.vectors.len() {
        return Err(SamplerError::Length {
            vectors: batch.vectors.len(),
            captions: captions.len(),
        });
    }
    batch
        .vectors
        .iter()
        .zip(captions)
        .enumerate()
        .map(|(i, (v, c))| {
            Ok(DatasetRecord {
                id: format!("{id_prefix}{i:06}"),
                attributes: decode_multihot(v, taxonomy)?,
                caption: c.as_ref().to_string(),
                provenance: batch.provenance.clone(),
            })
        })
        .collect()
}
