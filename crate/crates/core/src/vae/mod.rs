//! β-VAE over multi-hot attribute vectors.

mod export;
mod loss;
mod model;
mod train;

use serde::{Deserialize, Serialize};

pub use export::{
    latent_rows, load_vae, save_vae, trace_csv, write_latents_csv, write_trace_csv, LatentRow, VaeSidecar,
};
pub use loss::{kl_divergence, loss, loss_from_logits, LossParts};
pub use model::{reparameterize, reparameterize_with, threshold_fixed, VaeGradients, VaeModel};
pub use train::{
    collapse_check, evaluate_reconstruction, train, CollapseReport, EpochStats, ReconstructionMetrics,
    TrainingTrace, COLLAPSE_SAMPLES,
};

use crate::io::IoError;
use crate::nncore::NnError;

#[derive(Debug, thiserror::Error)]
pub enum VaeError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("{what} dimension mismatch: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("non-finite loss at epoch {epoch}, batch {batch}: {detail}")]
    NonFiniteLoss { epoch: usize, batch: usize, detail: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("taxonomy hash mismatch: checkpoint was trained on {checkpoint}, current taxonomy is {current}")]
    TaxonomyMismatch { checkpoint: String, current: String },
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VaeConfig {
    pub beta: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub latent_dim: usize,
    pub hidden_dim: usize,
    pub seed: u64,
    pub threshold: f64,
    /// Share of the dataset held out for the per-epoch Jaccard curve.
    pub validation_fraction: f64,
}

impl Default for VaeConfig {
    fn default() -> Self {
        Self {
            beta: 0.25,
            learning_rate: 3e-4,
            epochs: 110,
            batch_size: 32,
            latent_dim: 128,
            hidden_dim: 512,
            seed: 0,
            threshold: 0.5,
            validation_fraction: 0.1,
        }
    }
}

impl VaeConfig {
    pub fn validate(&self) -> Result<(), VaeError> {
        let problems = [
            (!(self.beta >= 0.0 && self.beta.is_finite()), "beta must be a finite value >= 0"),
            (!(self.learning_rate > 0.0), "learning_rate must be > 0"),
            (self.epochs == 0, "epochs must be >= 1"),
            (self.batch_size == 0, "batch_size must be >= 1"),
            (self.latent_dim == 0, "latent_dim must be >= 1"),
            (self.hidden_dim == 0, "hidden_dim must be >= 1"),
            (
                !(self.threshold > 0.0 && self.threshold < 1.0),
                "threshold must lie in (0, 1)",
            ),
            (
                !(0.0..1.0).contains(&self.validation_fraction),
                "validation_fraction must lie in [0, 1)",
            ),
        ];
        match problems.iter().find(|(bad, _)| *bad) {
            Some((_, msg)) => Err(VaeError::Config((*msg).to_string())),
            None => Ok(()),
        }
    }
}
