use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{normalize_tag, TaxonomyError};
use crate::io;

/// One tagged, captioned source example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceRecord {
    pub id: String,
    pub caption: String,
    #[serde(default)]
    pub tags: Vec<String>,
}

/// Loads a JSON-lines corpus, rejecting duplicate ids.
pub fn load_corpus(path: &Path) -> Result<Vec<SourceRecord>, TaxonomyError> {
    let records: Vec<SourceRecord> = io::read_jsonl(path)?;
    let mut seen = HashSet::new();
    for (i, r) in records.iter().enumerate() {
        if !seen.insert(r.id.as_str()) {
            return Err(TaxonomyError::DuplicateId {
                id: r.id.clone(),
                line: i + 1,
            });
        }
    }
    Ok(records)
}

/// Occurrence count of every normalized tag.
pub fn extract_tags(corpus: &[SourceRecord]) -> Result<BTreeMap<String, usize>, TaxonomyError> {
    if corpus.is_empty() {
        return Err(TaxonomyError::EmptyCorpus);
    }
    let mut counts = BTreeMap::new();
    for tag in corpus.iter().flat_map(|r| &r.tags) {
        let t = normalize_tag(tag);
        if !t.is_empty() {
            *counts.entry(t).or_insert(0) += 1;
        }
    }
    Ok(counts)
}
