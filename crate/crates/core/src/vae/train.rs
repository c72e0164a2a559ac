use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::metrics;
use crate::nncore::{grad_slices, AdamConfig, AdamState, Matrix, Rng};
use crate::taxonomy::AttributeVector;

use super::{loss, threshold_fixed, VaeConfig, VaeError, VaeModel};

/// Unconditional draws used by the collapse detector.
pub const COLLAPSE_SAMPLES: usize = 1000;

// Sub-stream ids under the training seed.
const STREAM_TRAIN: u64 = 0;
const STREAM_SPLIT: u64 = 1;
const STREAM_COLLAPSE: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub bce: f64,
    pub kl: f64,
    pub total: f64,
    pub val_jaccard: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionMetrics {
    pub count: usize,
    pub bce: f64,
    pub jaccard: f64,
    pub hamming: f64,
}

/// Summary of unconditional samples used to flag a collapsed generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollapseReport {
    pub samples: usize,
    pub unique: usize,
    pub diversity: f64,
    /// Share of samples equal to the most frequent vector.
    pub modal_fraction: f64,
    pub collapsed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub epochs: Vec<EpochStats>,
    /// Dataset indices held out for validation.
    pub validation_indices: Vec<usize>,
    pub validation: ReconstructionMetrics,
    pub collapse: CollapseReport,
}

impl TrainingTrace {
    pub fn last(&self) -> Option<&EpochStats> {
        self.epochs.last()
    }
}

fn to_matrix(rows: &[&AttributeVector], dim: usize) -> Matrix {
    let mut data = Vec::with_capacity(rows.len() * dim);
    for r in rows {
        data.extend(r.to_f64());
    }
    Matrix::from_vec(rows.len(), dim, data).expect("rows share the model dimension")
}

/// Posterior-mean reconstruction quality on `vectors`.
pub fn evaluate_reconstruction(
    model: &VaeModel,
    vectors: &[&AttributeVector],
    threshold: f64,
) -> Result<ReconstructionMetrics, VaeError> {
    if vectors.is_empty() {
        return Ok(ReconstructionMetrics {
            count: 0,
            bce: 0.0,
            jaccard: 1.0,
            hamming: 0.0,
        });
    }
    let x = to_matrix(vectors, model.input_dim());
    let (mu, logvar) = model.encode_batch(&x)?;
    let p = model.decode_batch(&mu)?;
    let parts = loss(&x, &p, &mu, &logvar, 0.0)?;
    let mut jac = 0.0;
    let mut ham = 0.0;
    for (i, v) in vectors.iter().enumerate() {
        let rec = threshold_fixed(p.row(i), threshold);
        jac += metrics::jaccard(v, &rec).expect("same length");
        ham += metrics::hamming(v, &rec).expect("same length");
    }
    let n = vectors.len() as f64;
    Ok(ReconstructionMetrics {
        count: vectors.len(),
        bce: parts.bce,
        jaccard: jac / n,
        hamming: ham / n,
    })
}

/// Draws `samples` latent vectors from the prior, decodes and thresholds them,
/// and reports how concentrated the outputs are. Collapse means the single
/// most common vector accounts for more than half of the draws.
pub fn collapse_check(model: &VaeModel, samples: usize, threshold: f64, rng: &mut Rng) -> Result<CollapseReport, VaeError> {
    let mut z = Matrix::zeros(samples, model.latent_dim());
    for v in z.as_mut_slice() {
        *v = rng.standard_normal();
    }
    let p = model.decode_batch(&z)?;
    let vectors: Vec<AttributeVector> = p.iter_rows().map(|row| threshold_fixed(row, threshold)).collect();
    let mut counts: HashMap<&AttributeVector, usize> = HashMap::new();
    for v in &vectors {
        *counts.entry(v).or_insert(0) += 1;
    }
    let modal = counts.values().copied().max().unwrap_or(0);
    let n = samples.max(1) as f64;
    let modal_fraction = modal as f64 / n;
    Ok(CollapseReport {
        samples,
        unique: counts.len(),
        diversity: counts.len() as f64 / n,
        modal_fraction,
        collapsed: modal_fraction > 0.5,
    })
}

fn split_indices(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    Rng::substream(seed, STREAM_SPLIT).shuffle(&mut idx);
    let mut val_count = (n as f64 * fraction).round() as usize;
    if fraction > 0.0 && n >= 2 {
        val_count = val_count.clamp(1, n - 1);
    } else if n < 2 {
        val_count = 0;
    }
    let validation = idx[..val_count].to_vec();
    let train = idx[val_count..].to_vec();
    (train, validation)
}

/// Minibatch Adam on the β-VAE objective. Fully determined by `config.seed`.
pub fn train(dataset: &[AttributeVector], config: &VaeConfig) -> Result<(VaeModel, TrainingTrace), VaeError> {
    config.validate()?;
    let dim = dataset.first().ok_or(VaeError::EmptyDataset)?.len();
    if let Some(bad) = dataset.iter().find(|v| v.len() != dim) {
        return Err(VaeError::Dimension {
            what: "dataset vector",
            expected: dim,
            got: bad.len(),
        });
    }

    let (mut train_idx, val_idx) = split_indices(dataset.len(), config.validation_fraction, config.seed);
    let mut rng = Rng::substream(config.seed, STREAM_TRAIN);
    let mut model = VaeModel::init(dim, config.hidden_dim, config.latent_dim, &mut rng);
    let mut adam = AdamState::new(
        AdamConfig::with_learning_rate(config.learning_rate),
        &model.param_sizes(),
    )?;

    // with no held-out rows, the curve is computed on the training rows
    let val_rows: Vec<&AttributeVector> = if val_idx.is_empty() {
        train_idx.iter().map(|&i| &dataset[i]).collect()
    } else {
        val_idx.iter().map(|&i| &dataset[i]).collect()
    };

    let mut epochs = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        rng.shuffle(&mut train_idx);
        let (mut bce, mut kl, mut total) = (0.0, 0.0, 0.0);
        for (batch_no, chunk) in train_idx.chunks(config.batch_size).enumerate() {
            let rows: Vec<&AttributeVector> = chunk.iter().map(|&i| &dataset[i]).collect();
            let x = to_matrix(&rows, dim);
            let mut eps = Matrix::zeros(rows.len(), config.latent_dim);
            for v in eps.as_mut_slice() {
                *v = rng.standard_normal();
            }
            let grads = model.gradients(&x, &eps, config.beta)?;
            let parts = grads.loss;
            if !parts.total.is_finite() {
                return Err(VaeError::NonFiniteLoss {
                    epoch,
                    batch: batch_no,
                    detail: format!("bce={} kl={}", parts.bce, parts.kl),
                });
            }
            adam.step(&mut model.param_slices_mut(), &grad_slices(&grads.layers))
                .map_err(|e| VaeError::NonFiniteLoss {
                    epoch,
                    batch: batch_no,
                    detail: e.to_string(),
                })?;
            let w = rows.len() as f64;
            bce += parts.bce * w;
            kl += parts.kl * w;
            total += parts.total * w;
        }
        let n = train_idx.len().max(1) as f64;
        let val = evaluate_reconstruction(&model, &val_rows, config.threshold)?;
        let stats = EpochStats {
            epoch,
            bce: bce / n,
            kl: kl / n,
            total: total / n,
            val_jaccard: val.jaccard,
        };
        if epoch == 1 || epoch % 10 == 0 || epoch == config.epochs {
            log::info!(
                "epoch {epoch}: bce {:.4} kl {:.4} total {:.4} val jaccard {:.4}",
                stats.bce,
                stats.kl,
                stats.total,
                stats.val_jaccard
            );
        }
        epochs.push(stats);
    }

    let validation = evaluate_reconstruction(&model, &val_rows, config.threshold)?;
    let collapse = collapse_check(
        &model,
        COLLAPSE_SAMPLES,
        config.threshold,
        &mut Rng::substream(config.seed, STREAM_COLLAPSE),
    )?;
    if collapse.collapsed {
        log::warn!(
            "model collapse: {:.1}% of {} unconditional samples are the same vector (diversity {:.3})",
            100.0 * collapse.modal_fraction,
            collapse.samples,
            collapse.diversity
        );
    }
    Ok((
        model,
        TrainingTrace {
            epochs,
            validation_indices: val_idx,
            validation,
            collapse,
        },
    ))
}
