use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::io::{self, IoError};
use crate::nncore::Checkpoint;
use crate::taxonomy::{AttributeVector, ConceptTaxonomy};

use super::{TrainingTrace, VaeConfig, VaeError, VaeModel};

const SIDECAR_FORMAT: &str = "vae-sidecar";

/// Metadata written next to a VAE checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaeSidecar {
    pub format: String,
    pub version: u32,
    pub config: VaeConfig,
    pub taxonomy_hash: String,
    pub input_dim: usize,
    pub checkpoint_sha256: String,
}

/// Writes the checkpoint and its sidecar; returns the sidecar.
pub fn save_vae(
    model: &VaeModel,
    config: &VaeConfig,
    taxonomy_hash: &str,
    checkpoint_path: &Path,
    sidecar_path: &Path,
) -> Result<VaeSidecar, VaeError> {
    let json = model.to_checkpoint(config.seed).to_json()?;
    io::write_atomic(checkpoint_path, json.as_bytes())?;
    let sidecar = VaeSidecar {
        format: SIDECAR_FORMAT.to_string(),
        version: 1,
        config: config.clone(),
        taxonomy_hash: taxonomy_hash.to_string(),
        input_dim: model.input_dim(),
        checkpoint_sha256: io::sha256_hex(json.as_bytes()),
    };
    let text = serde_json::to_string_pretty(&sidecar).map_err(|e| IoError::Serialize(e.to_string()))?;
    io::write_atomic(sidecar_path, text.as_bytes())?;
    Ok(sidecar)
}

/// Loads a checkpoint, verifying it against its sidecar and, when given, the
/// hash of the taxonomy it is about to be used with.
pub fn load_vae(
    checkpoint_path: &Path,
    sidecar_path: &Path,
    expected_taxonomy_hash: Option<&str>,
) -> Result<(VaeModel, VaeSidecar), VaeError> {
    let sidecar: VaeSidecar = serde_json::from_str(&io::read_to_string(sidecar_path)?)
        .map_err(|e| VaeError::Checkpoint(format!("{}: {e}", sidecar_path.display())))?;
    if sidecar.format != SIDECAR_FORMAT {
        return Err(VaeError::Checkpoint(format!("{}: not a VAE sidecar", sidecar_path.display())));
    }
    if let Some(expected) = expected_taxonomy_hash {
        if expected != sidecar.taxonomy_hash {
            return Err(VaeError::TaxonomyMismatch {
                checkpoint: sidecar.taxonomy_hash,
                current: expected.to_string(),
            });
        }
    }
    let text = io::read_to_string(checkpoint_path)?;
    if io::sha256_hex(text.as_bytes()) != sidecar.checkpoint_sha256 {
        return Err(VaeError::Checkpoint(format!(
            "{} does not match the digest recorded in its sidecar",
            checkpoint_path.display()
        )));
    }
    let model = VaeModel::from_checkpoint(&Checkpoint::from_json(&text)?)?;
    if model.input_dim() != sidecar.input_dim {
        return Err(VaeError::Dimension {
            what: "checkpoint input",
            expected: sidecar.input_dim,
            got: model.input_dim(),
        });
    }
    Ok((model, sidecar))
}

/// Per-epoch trace as CSV: `epoch,bce,kl,total,val_jaccard`.
pub fn trace_csv(trace: &TrainingTrace) -> Result<String, VaeError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| IoError::Serialize(e.to_string());
    w.write_record(["epoch", "bce", "kl", "total", "val_jaccard"]).map_err(err)?;
    for e in &trace.epochs {
        w.write_record([
            e.epoch.to_string(),
            e.bce.to_string(),
            e.kl.to_string(),
            e.total.to_string(),
            e.val_jaccard.to_string(),
        ])
        .map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| IoError::Serialize(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn write_trace_csv(path: &Path, trace: &TrainingTrace) -> Result<(), VaeError> {
    io::write_atomic(path, trace_csv(trace)?.as_bytes())?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentRow {
    pub id: String,
    pub mu: Vec<f64>,
    pub dominant_category: String,
}

fn dominant_category(v: &AttributeVector, taxonomy: &ConceptTaxonomy) -> String {
    let mut counts = vec![0usize; taxonomy.categories().len()];
    for i in v.ones_indices() {
        counts[taxonomy.category_index(i)] += 1;
    }
    // first maximum wins, so ties go to the lexicographically smaller category
    let best = counts
        .iter()
        .enumerate()
        .fold(None::<(usize, usize)>, |acc, (i, &c)| match acc {
            Some((_, bc)) if bc >= c => acc,
            _ if c > 0 => Some((i, c)),
            _ => acc,
        });
    best.map_or_else(|| "none".to_string(), |(i, _)| taxonomy.categories()[i].name.clone())
}

/// Posterior means for each record, tagged with its dominant category.
pub fn latent_rows(
    model: &VaeModel,
    ids: &[String],
    vectors: &[AttributeVector],
    taxonomy: &ConceptTaxonomy,
) -> Result<Vec<LatentRow>, VaeError> {
    ids.iter()
        .zip(vectors)
        .map(|(id, v)| {
            let (mu, _) = model.encode(v)?;
            Ok(LatentRow {
                id: id.clone(),
                mu,
                dominant_category: dominant_category(v, taxonomy),
            })
        })
        .collect()
}

/// CSV with header `record_id,mu_1..mu_L,dominant_category`.
pub fn write_latents_csv(path: &Path, rows: &[LatentRow]) -> Result<(), VaeError> {
    let latent = rows.first().map_or(0, |r| r.mu.len());
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| IoError::Serialize(e.to_string());
    let mut header = vec!["record_id".to_string()];
    header.extend((1..=latent).map(|j| format!("mu_{j}")));
    header.push("dominant_category".to_string());
    w.write_record(&header).map_err(err)?;
    for r in rows {
        let mut rec = vec![r.id.clone()];
        rec.extend(r.mu.iter().map(f64::to_string));
        rec.push(r.dominant_category.clone());
        w.write_record(&rec).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| IoError::Serialize(e.to_string()))?;
    io::write_atomic(path, &bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::Rng;

    #[test]
    fn dominant_category_prefers_most_populated() {
        let t = ConceptTaxonomy::new([("genre", vec!["folk", "rock"]), ("mood", vec!["sad", "upbeat", "calm"])]).unwrap();
        let v = AttributeVector::from_indices(t.dim(), [0, 2, 3]);
        assert_eq!(dominant_category(&v, &t), "mood");
        let tie = AttributeVector::from_indices(t.dim(), [0, 2]);
        assert_eq!(dominant_category(&tie, &t), "genre");
        assert_eq!(dominant_category(&AttributeVector::zeros(t.dim()), &t), "none");
    }

    #[test]
    fn sidecar_guards_taxonomy_and_digest() {
        let dir = tempfile::tempdir().unwrap();
        let ck = dir.path().join("m.json");
        let sc = dir.path().join("m.sidecar.json");
        let cfg = VaeConfig {
            hidden_dim: 4,
            latent_dim: 2,
            ..VaeConfig::default()
        };
        let model = VaeModel::init(5, 4, 2, &mut Rng::new(1));
        save_vae(&model, &cfg, "abc", &ck, &sc).unwrap();
        let (back, side) = load_vae(&ck, &sc, Some("abc")).unwrap();
        assert_eq!(back, model);
        assert_eq!(side.config, cfg);
        assert!(matches!(
            load_vae(&ck, &sc, Some("other")),
            Err(VaeError::TaxonomyMismatch { .. })
        ));
        std::fs::write(&ck, model.to_checkpoint(99).to_json().unwrap()).unwrap();
        assert!(matches!(load_vae(&ck, &sc, None), Err(VaeError::Checkpoint(_))));
    }
}
