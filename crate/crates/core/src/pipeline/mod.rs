//! End-to-end stages: distill, train-vae, sample, caption, evaluate, tcav,
//! report and gradcheck, sharing one config file and one output directory.

mod config;
mod gradcheck;
mod manifest;
mod stages;

use std::path::PathBuf;

use crate::captioner::CaptionError;
use crate::io::IoError;
use crate::metrics::MetricError;
use crate::nncore::NnError;
use crate::sampler::SamplerError;
use crate::taxonomy::TaxonomyError;
use crate::tcav::TcavError;
use crate::vae::VaeError;

pub use config::{CaptionMode, CaptionSettings, EvaluateSettings, GradcheckSettings, PathsConfig, PipelineConfig, SampleSettings, TcavSettings};
pub use gradcheck::{gradcheck_csv, gradcheck_suite, random_mlp_case, vae_case, GradcheckCase};
pub use manifest::{RunManifest, StageRecord, MANIFEST_FILE};
pub use stages::{
    cmd_caption, cmd_distill, cmd_evaluate, cmd_gradcheck, cmd_report, cmd_sample, cmd_tcav, cmd_train_vae,
    StageOutcome, TrainSummary,
};

/// Artifact file names inside the output directory.
pub mod artifacts {
    pub const DISTILLED: &str = "distilled.jsonl";
    pub const DISTILL_REPORT: &str = "distill_report.json";
    pub const CHECKPOINT: &str = "vae_checkpoint.json";
    pub const SIDECAR: &str = "vae_sidecar.json";
    pub const TRACE: &str = "vae_trace.csv";
    pub const LATENTS: &str = "vae_latents.csv";
    pub const TRAIN_SUMMARY: &str = "vae_summary.json";
    pub const SAMPLES: &str = "samples.jsonl";
    pub const DATASET: &str = "dataset.jsonl";
    pub const METRICS_JSON: &str = "metrics.json";
    pub const METRICS_CSV: &str = "metrics.csv";
    pub const PROBE: &str = "probe_classifier.json";
    pub const CONCEPTS: &str = "tcav_concepts.jsonl";
    pub const CLASSES: &str = "tcav_classes.jsonl";
    pub const TCAV_RESULTS: &str = "tcav_results.csv";
    pub const REPORT_CSV: &str = "report.csv";
    pub const GRADCHECK_CSV: &str = "gradcheck.csv";
}

/// Pipeline stages; each derives its seed as `global seed + offset`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Distill,
    TrainVae,
    Sample,
    Caption,
    Tcav,
    Evaluate,
    Report,
    Gradcheck,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Distill => "distill",
            Stage::TrainVae => "train-vae",
            Stage::Sample => "sample",
            Stage::Caption => "caption",
            Stage::Tcav => "tcav",
            Stage::Evaluate => "evaluate",
            Stage::Report => "report",
            Stage::Gradcheck => "gradcheck",
        }
    }

    pub fn seed_offset(self) -> u64 {
        match self {
            Stage::Distill => 0,
            Stage::TrainVae => 1,
            Stage::Sample => 2,
            Stage::Caption => 3,
            Stage::Tcav => 4,
            Stage::Evaluate => 5,
            Stage::Report => 6,
            Stage::Gradcheck => 7,
        }
    }

    pub fn seed(self, global: u64) -> u64 {
        global.wrapping_add(self.seed_offset())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("input: {0}")]
    Input(String),
    #[error("{path} not found; run `{stage}` first")]
    MissingArtifact { path: PathBuf, stage: &'static str },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("endpoint: {0}")]
    Endpoint(String),
}

impl PipelineError {
    /// Process exit code: 2 config, 3 input, 4 numerical, 5 endpoint.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Input(_) | PipelineError::MissingArtifact { .. } => 3,
            PipelineError::Numerical(_) => 4,
            PipelineError::Endpoint(_) => 5,
        }
    }
}

impl From<IoError> for PipelineError {
    fn from(e: IoError) -> Self {
        PipelineError::Input(e.to_string())
    }
}

impl From<NnError> for PipelineError {
    fn from(e: NnError) -> Self {
        match e {
            NnError::NonFinite(_) | NnError::NonFiniteGradient { .. } => PipelineError::Numerical(e.to_string()),
            NnError::InvalidConfig(_) => PipelineError::Config(e.to_string()),
            _ => PipelineError::Input(e.to_string()),
        }
    }
}

impl From<TaxonomyError> for PipelineError {
    fn from(e: TaxonomyError) -> Self {
        PipelineError::Input(e.to_string())
    }
}

impl From<VaeError> for PipelineError {
    fn from(e: VaeError) -> Self {
        match e {
            VaeError::Nn(inner) => inner.into(),
            VaeError::Config(_) => PipelineError::Config(e.to_string()),
            VaeError::NonFiniteLoss { .. } => PipelineError::Numerical(e.to_string()),
            _ => PipelineError::Input(e.to_string()),
        }
    }
}

impl From<SamplerError> for PipelineError {
    fn from(e: SamplerError) -> Self {
        match e {
            SamplerError::Vae(inner) => inner.into(),
            SamplerError::Config(_) | SamplerError::Contradictory(_) | SamplerError::Infeasible(_) => {
                PipelineError::Config(e.to_string())
            }
            SamplerError::Exhausted { .. } => PipelineError::Numerical(e.to_string()),
            _ => PipelineError::Input(e.to_string()),
        }
    }
}

impl From<CaptionError> for PipelineError {
    fn from(e: CaptionError) -> Self {
        match e {
            CaptionError::Config(_) => PipelineError::Config(e.to_string()),
            CaptionError::InvalidRequest(_) => PipelineError::Input(e.to_string()),
            CaptionError::Endpoint { .. } | CaptionError::Malformed(_) => PipelineError::Endpoint(e.to_string()),
        }
    }
}

impl From<MetricError> for PipelineError {
    fn from(e: MetricError) -> Self {
        PipelineError::Input(e.to_string())
    }
}

impl From<TcavError> for PipelineError {
    fn from(e: TcavError) -> Self {
        match e {
            TcavError::Nn(inner) => inner.into(),
            TcavError::Config(_) | TcavError::UnknownLayer { .. } => PipelineError::Config(e.to_string()),
            _ => PipelineError::Input(e.to_string()),
        }
    }
}
