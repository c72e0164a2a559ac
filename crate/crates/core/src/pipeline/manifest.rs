use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::io::{self, IoError};

pub const MANIFEST_FILE: &str = "manifest.json";
const FORMAT: &str = "conceptsynth-manifest";

/// One stage's inputs and outputs (name -> SHA-256) and how long it took.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub seed: u64,
    /// Hash of the configuration the stage ran under.
    pub config_hash: String,
    pub wall_time_secs: f64,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

/// Provenance of everything in an output directory. Files inside the output
/// directory are keyed by file name, external inputs by their configured path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub config_hash: String,
    pub module_versions: BTreeMap<String, String>,
    pub stages: BTreeMap<String, StageRecord>,
    /// Hash over everything above except wall times.
    pub manifest_hash: String,
}

impl RunManifest {
    pub fn new(config_hash: &str) -> Self {
        let mut m = Self {
            format: FORMAT.to_string(),
            config_hash: config_hash.to_string(),
            module_versions: BTreeMap::from([(
                env!("CARGO_PKG_NAME").to_string(),
                env!("CARGO_PKG_VERSION").to_string(),
            )]),
            stages: BTreeMap::new(),
            manifest_hash: String::new(),
        };
        m.manifest_hash = m.compute_hash();
        m
    }

    /// The manifest in `out_dir`, or a fresh one. Earlier stage records are
    /// kept; each carries the configuration hash it ran under.
    pub fn load_or_new(out_dir: &Path, config_hash: &str) -> Result<Self, PipelineError> {
        let path = out_dir.join(MANIFEST_FILE);
        if !path.is_file() {
            return Ok(Self::new(config_hash));
        }
        let text = io::read_to_string(&path)?;
        let existing: RunManifest = serde_json::from_str(&text)
            .map_err(|e| PipelineError::Input(format!("{}: {e}", path.display())))?;
        if existing.format != FORMAT {
            return Err(PipelineError::Input(format!("{} is not a run manifest", path.display())));
        }
        let mut fresh = Self::new(config_hash);
        fresh.stages = existing.stages;
        fresh.manifest_hash = fresh.compute_hash();
        Ok(fresh)
    }

    pub fn record(&mut self, stage: &str, record: StageRecord) {
        self.stages.insert(stage.to_string(), record);
        self.manifest_hash = self.compute_hash();
    }

    pub fn compute_hash(&self) -> String {
        let mut stripped = self.clone();
        stripped.manifest_hash.clear();
        for s in stripped.stages.values_mut() {
            s.wall_time_secs = 0.0;
        }
        io::sha256_hex(&serde_json::to_vec(&stripped).expect("manifest serializes to JSON"))
    }

    /// Every output file across stages, sorted.
    pub fn output_files(&self) -> Vec<&str> {
        let mut files: Vec<&str> = self
            .stages
            .values()
            .flat_map(|s| s.outputs.keys().map(String::as_str))
            .collect();
        files.sort_unstable();
        files.dedup();
        files
    }

    pub fn write(&self, out_dir: &Path) -> Result<(), PipelineError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| IoError::Serialize(e.to_string()))? + "\n";
        io::write_atomic(&out_dir.join(MANIFEST_FILE), text.as_bytes())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(secs: f64) -> StageRecord {
        StageRecord {
            seed: 1,
            config_hash: "cfg".to_string(),
            wall_time_secs: secs,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::from([("samples.jsonl".to_string(), "ab".to_string())]),
        }
    }

    #[test]
    fn hash_ignores_wall_time_only() {
        let mut a = RunManifest::new("cfg");
        let mut b = RunManifest::new("cfg");
        a.record("sample", record(1.0));
        b.record("sample", record(7.5));
        assert_eq!(a.manifest_hash, b.manifest_hash);
        let mut r = record(1.0);
        r.seed = 2;
        b.record("sample", r);
        assert_ne!(a.manifest_hash, b.manifest_hash);
        assert_eq!(a.output_files(), ["samples.jsonl"]);
    }

    #[test]
    fn reload_keeps_stages() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = RunManifest::new("cfg");
        m.record("sample", record(0.1));
        m.write(dir.path()).unwrap();
        let again = RunManifest::load_or_new(dir.path(), "cfg").unwrap();
        assert_eq!(again, m);
        let other = RunManifest::load_or_new(dir.path(), "other").unwrap();
        assert_eq!(other.config_hash, "other");
        assert_eq!(other.stages, m.stages);
    }
}
