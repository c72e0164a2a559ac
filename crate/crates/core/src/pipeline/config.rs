use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{PipelineError, Stage};
use crate::captioner::{EndpointConfig, DEFAULT_TARGET_WORDS};
use crate::io;
use crate::sampler::{SamplerConfig, SeedSpec, ThresholdMode};
use crate::taxonomy::DistillCriteria;
use crate::tcav::{CavConfig, ProbeConfig, TcavConfig};
use crate::vae::VaeConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Source corpus, JSON lines of {"id", "caption", "tags"}.
    pub corpus: Option<PathBuf>,
    /// Taxonomy TOML; the built-in music taxonomy when unset.
    pub taxonomy: Option<PathBuf>,
    /// Synonym TOML; the built-in synonyms when unset.
    pub synonyms: Option<PathBuf>,
    pub out_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            corpus: None,
            taxonomy: None,
            synonyms: None,
            out_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleSettings {
    pub n: usize,
    pub threshold: f64,
    /// Keep the k most probable attributes instead of thresholding.
    pub top_k: Option<usize>,
    pub force_on: Vec<String>,
    pub force_off: Vec<String>,
    pub min_attrs: usize,
    pub max_attrs: usize,
    pub max_attempts: usize,
    pub id_prefix: String,
}

impl Default for SampleSettings {
    fn default() -> Self {
        let s = SamplerConfig::default();
        Self {
            n: 500,
            threshold: 0.5,
            top_k: None,
            force_on: Vec::new(),
            force_off: Vec::new(),
            min_attrs: s.min_attrs,
            max_attrs: s.max_attrs,
            max_attempts: s.max_attempts,
            id_prefix: "gen-".to_string(),
        }
    }
}

impl SampleSettings {
    pub fn sampler_config(&self, seed: u64) -> SamplerConfig {
        SamplerConfig {
            threshold: match self.top_k {
                Some(k) => ThresholdMode::TopK(k),
                None => ThresholdMode::Fixed(self.threshold),
            },
            min_attrs: self.min_attrs,
            max_attrs: self.max_attrs,
            max_attempts: self.max_attempts,
            seed,
        }
    }

    /// `None` for unconditional sampling.
    pub fn seed_spec(&self) -> Option<SeedSpec> {
        if self.force_on.is_empty() && self.force_off.is_empty() {
            None
        } else {
            Some(SeedSpec::new(self.force_on.iter().cloned(), self.force_off.iter().cloned()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptionMode {
    Template,
    Endpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CaptionSettings {
    pub mode: CaptionMode,
    pub concurrency: usize,
    pub target_words: usize,
    pub style: String,
    pub endpoint: EndpointConfig,
}

impl Default for CaptionSettings {
    fn default() -> Self {
        Self {
            mode: CaptionMode::Template,
            concurrency: 4,
            target_words: DEFAULT_TARGET_WORDS,
            style: "professional music description".to_string(),
            endpoint: EndpointConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSettings {
    /// Run label in the metric report.
    pub run: String,
    /// Distilled records re-captioned for BLEU / ROUGE-L (0 = all).
    pub max_reference_records: usize,
    pub bleu_max_n: usize,
}

impl Default for EvaluateSettings {
    fn default() -> Self {
        Self {
            run: "run".to_string(),
            max_reference_records: 0,
            bleu_max_n: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TcavSettings {
    /// Probe classifier checkpoint. When unset, a probe is trained on
    /// planted-concept synthetic data and concept/class files are generated.
    pub model: Option<PathBuf>,
    pub concepts: Option<PathBuf>,
    pub classes: Option<PathBuf>,
    pub layer: Option<String>,
    pub alpha: f64,
    pub random_cavs: usize,
    pub concept_runs: usize,
    pub cav: CavConfig,
    pub probe: ProbeConfig,
}

impl Default for TcavSettings {
    fn default() -> Self {
        let t = TcavConfig::default();
        Self {
            model: None,
            concepts: None,
            classes: None,
            layer: None,
            alpha: t.alpha,
            random_cavs: t.random_cavs,
            concept_runs: t.concept_runs,
            cav: t.cav,
            probe: ProbeConfig::default(),
        }
    }
}

impl TcavSettings {
    pub fn tcav_config(&self, seed: u64) -> TcavConfig {
        TcavConfig {
            layer: self.layer.clone(),
            alpha: self.alpha,
            concept_runs: self.concept_runs,
            random_cavs: self.random_cavs,
            cav: self.cav.clone(),
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckSettings {
    pub networks: usize,
    pub epsilon: f64,
    pub tolerance: f64,
}

impl Default for GradcheckSettings {
    fn default() -> Self {
        Self {
            networks: 20,
            epsilon: 1e-5,
            tolerance: 1e-4,
        }
    }
}

/// Everything a pipeline run needs. Stage seeds are `seed + offset`, so the
/// per-module `seed` fields below are overwritten at run time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub paths: PathsConfig,
    pub distill: DistillCriteria,
    pub vae: VaeConfig,
    pub sample: SampleSettings,
    pub caption: CaptionSettings,
    pub evaluate: EvaluateSettings,
    pub tcav: TcavSettings,
    pub gradcheck: GradcheckSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            paths: PathsConfig::default(),
            distill: DistillCriteria::default(),
            vae: VaeConfig::default(),
            sample: SampleSettings::default(),
            caption: CaptionSettings::default(),
            evaluate: EvaluateSettings::default(),
            tcav: TcavSettings::default(),
            gradcheck: GradcheckSettings::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = io::read_to_string(path).map_err(|e| PipelineError::Config(e.to_string()))?;
        toml::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("pipeline config serializes to TOML")
    }

    pub fn stage_seed(&self, stage: Stage) -> u64 {
        stage.seed(self.seed)
    }

    pub fn out_path(&self, name: &str) -> PathBuf {
        self.paths.out_dir.join(name)
    }

    /// Checks that referenced input files exist and settings are in range.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let paths = [
            ("paths.corpus", &self.paths.corpus),
            ("paths.taxonomy", &self.paths.taxonomy),
            ("paths.synonyms", &self.paths.synonyms),
            ("tcav.model", &self.tcav.model),
            ("tcav.concepts", &self.tcav.concepts),
            ("tcav.classes", &self.tcav.classes),
        ];
        for (key, path) in paths {
            if let Some(p) = path {
                if !p.is_file() {
                    return Err(PipelineError::Config(format!("{key} = {} does not exist", p.display())));
                }
            }
        }
        let explicit = [&self.tcav.model, &self.tcav.concepts, &self.tcav.classes];
        let set = explicit.iter().filter(|p| p.is_some()).count();
        if set != 0 && set != 3 {
            return Err(PipelineError::Config(
                "tcav.model, tcav.concepts and tcav.classes must be given together".into(),
            ));
        }
        self.vae.validate()?;
        if self.sample.n == 0 {
            return Err(PipelineError::Config("sample.n must be >= 1".into()));
        }
        if self.caption.concurrency == 0 {
            return Err(PipelineError::Config("caption.concurrency must be >= 1".into()));
        }
        if !(self.tcav.alpha > 0.0 && self.tcav.alpha < 1.0) {
            return Err(PipelineError::Config("tcav.alpha must lie in (0, 1)".into()));
        }
        if !(self.gradcheck.epsilon > 0.0 && self.gradcheck.tolerance > 0.0) {
            return Err(PipelineError::Config("gradcheck epsilon and tolerance must be > 0".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, ignoring the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.paths.out_dir = PathBuf::new();
        let json = serde_json::to_vec(&c).expect("pipeline config serializes to JSON");
        io::sha256_hex(&json)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = PipelineConfig::default();
        let text = c.to_toml_string();
        assert!(text.contains("beta = 0.25"), "{text}");
        assert!(text.contains("[caption.endpoint]"));
        assert_eq!(PipelineConfig::from_toml_str(&text).unwrap(), c);
    }

    #[test]
    fn partial_file_keeps_other_defaults() {
        let c = PipelineConfig::from_toml_str("seed = 9\n[vae]\nepochs = 3\n").unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.vae.epochs, 3);
        assert_eq!(c.vae.beta, 0.25);
        assert_eq!(c.sample.n, 500);
    }

    #[test]
    fn unknown_keys_and_missing_paths_are_config_errors() {
        let e = PipelineConfig::from_toml_str("sedd = 1\n").unwrap_err();
        assert_eq!(e.exit_code(), 2);
        let mut c = PipelineConfig::default();
        c.paths.corpus = Some("/definitely/not/here.jsonl".into());
        assert!(c.validate().unwrap_err().to_string().contains("paths.corpus"));
    }

    #[test]
    fn hash_ignores_out_dir() {
        let a = PipelineConfig::default();
        let mut b = a.clone();
        b.paths.out_dir = "elsewhere".into();
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
    }
}
