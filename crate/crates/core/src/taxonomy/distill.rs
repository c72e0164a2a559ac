use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{canonicalize, ConceptTaxonomy, SourceRecord, SynonymMap};

/// Thresholds a source record must meet to be retained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistillCriteria {
    pub min_categories: usize,
    pub min_attributes: usize,
    pub max_attributes: usize,
    pub min_caption_words: usize,
    /// Share of caption characters that must be printable.
    pub min_printable_ratio: f64,
    /// Require terminal punctuation or a noun-phrase ending.
    pub require_clear_ending: bool,
}

impl Default for DistillCriteria {
    fn default() -> Self {
        Self {
            min_categories: 3,
            min_attributes: 3,
            max_attributes: 15,
            min_caption_words: 15,
            min_printable_ratio: 0.95,
            require_clear_ending: true,
        }
    }
}

/// First failed check for a rejected record, in evaluation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    TooFewAttributes,
    TooManyAttributes,
    TooFewCategories,
    CaptionTooShort,
    NonPrintableCaption,
    UnclearCaption,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistilledRecord {
    pub id: String,
    pub caption: String,
    /// Canonical attributes in taxonomy index order.
    pub attributes: Vec<String>,
    /// Number of distinct categories covered.
    pub categories: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub taxonomy_hash: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillReport {
    pub input_records: usize,
    pub retained: usize,
    pub rejected: BTreeMap<RejectReason, usize>,
    /// Raw tags (normalized) with no taxonomy mapping, and how often they occurred.
    pub unmapped_tags: BTreeMap<String, usize>,
    pub criteria: DistillCriteria,
    pub taxonomy_hash: String,
}

#[derive(Debug, Clone)]
pub struct DistillOutput {
    pub records: Vec<DistilledRecord>,
    pub report: DistillReport,
}

const FUNCTION_WORDS: &[&str] = &[
    "a", "an", "and", "as", "at", "but", "by", "for", "from", "if", "in", "into", "is", "it", "its", "of", "on",
    "or", "so", "that", "the", "their", "then", "this", "to", "was", "with", "while", "which", "are", "be",
];

/// Caption checks: word count, printable share, and a clear ending.
pub fn caption_is_clear(caption: &str, criteria: &DistillCriteria) -> Result<(), RejectReason> {
    let words: Vec<&str> = caption.split_whitespace().collect();
    if words.len() < criteria.min_caption_words {
        return Err(RejectReason::CaptionTooShort);
    }
    let total = caption.chars().count();
    let printable = caption
        .chars()
        .filter(|c| !c.is_control() && *c != char::REPLACEMENT_CHARACTER)
        .count();
    if total == 0 || (printable as f64) < criteria.min_printable_ratio * total as f64 {
        return Err(RejectReason::NonPrintableCaption);
    }
    if criteria.require_clear_ending && !has_clear_ending(&words) {
        return Err(RejectReason::UnclearCaption);
    }
    Ok(())
}

fn has_clear_ending(words: &[&str]) -> bool {
    let Some(last) = words.last() else {
        return false;
    };
    let trimmed = last.trim_end_matches(['"', '\'', ')', ']']);
    if trimmed.ends_with(['.', '!', '?']) {
        return true;
    }
    // noun-phrase ending: a content word, not a dangling function word
    let lower = trimmed.to_lowercase();
    !lower.is_empty()
        && lower.chars().all(|c| c.is_alphabetic() || c == '-')
        && !FUNCTION_WORDS.contains(&lower.as_str())
}

struct Canonical {
    attributes: Vec<String>,
    categories: usize,
}

fn canonical_attributes(
    record: &SourceRecord,
    taxonomy: &ConceptTaxonomy,
    synonyms: &SynonymMap,
    unmapped: &mut BTreeMap<String, usize>,
) -> Canonical {
    let mut indices = BTreeSet::new();
    for tag in &record.tags {
        match canonicalize(tag, taxonomy, synonyms) {
            Some(a) => {
                indices.insert(taxonomy.index_of(&a).expect("canonical attribute is indexed"));
            }
            None => {
                let norm = super::normalize_tag(tag);
                if !norm.is_empty() {
                    *unmapped.entry(norm).or_insert(0) += 1;
                }
            }
        }
    }
    let categories: BTreeSet<usize> = indices.iter().map(|&i| taxonomy.category_index(i)).collect();
    Canonical {
        attributes: indices.iter().map(|&i| taxonomy.attribute(i).to_string()).collect(),
        categories: categories.len(),
    }
}

fn check(caption: &str, attributes: usize, categories: usize, criteria: &DistillCriteria) -> Result<(), RejectReason> {
    if attributes < criteria.min_attributes {
        return Err(RejectReason::TooFewAttributes);
    }
    if attributes > criteria.max_attributes {
        return Err(RejectReason::TooManyAttributes);
    }
    if categories < criteria.min_categories {
        return Err(RejectReason::TooFewCategories);
    }
    caption_is_clear(caption, criteria)
}

/// Re-checks a distilled record against the criteria it claims to satisfy.
pub fn validate_record(
    record: &DistilledRecord,
    taxonomy: &ConceptTaxonomy,
    criteria: &DistillCriteria,
) -> Result<(), RejectReason> {
    let mut cats = BTreeSet::new();
    for a in &record.attributes {
        match taxonomy.index_of(a) {
            Some(i) => {
                cats.insert(taxonomy.category_index(i));
            }
            None => return Err(RejectReason::TooFewAttributes),
        }
    }
    if cats.len() != record.categories {
        return Err(RejectReason::TooFewCategories);
    }
    check(&record.caption, record.attributes.len(), cats.len(), criteria)
}

/// Filters the corpus down to records whose canonical attributes and caption
/// meet `criteria`. Output order follows input order.
pub fn distill(
    corpus: &[SourceRecord],
    taxonomy: &ConceptTaxonomy,
    synonyms: &SynonymMap,
    criteria: &DistillCriteria,
) -> DistillOutput {
    let hash = taxonomy.hash();
    let mut unmapped = BTreeMap::new();
    let mut rejected = BTreeMap::new();
    let mut records = Vec::new();
    for rec in corpus {
        let canon = canonical_attributes(rec, taxonomy, synonyms, &mut unmapped);
        match check(&rec.caption, canon.attributes.len(), canon.categories, criteria) {
            Ok(()) => records.push(DistilledRecord {
                id: rec.id.clone(),
                caption: rec.caption.trim().to_string(),
                attributes: canon.attributes,
                categories: canon.categories,
                taxonomy_hash: Some(hash.clone()),
            }),
            Err(reason) => *rejected.entry(reason).or_insert(0) += 1,
        }
    }
    let report = DistillReport {
        input_records: corpus.len(),
        retained: records.len(),
        rejected,
        unmapped_tags: unmapped,
        criteria: criteria.clone(),
        taxonomy_hash: hash,
    };
    DistillOutput { records, report }
}
