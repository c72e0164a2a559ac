//! Concept taxonomy, tag canonicalization, corpus distillation and multi-hot
//! encoding.
//!
//! Categories and the attributes inside each category are kept in
//! lexicographic order, which fixes the attribute → dimension index.

mod corpus;
mod distill;
mod multihot;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::Deserialize;

pub use corpus::{extract_tags, load_corpus, SourceRecord};
pub use distill::{
    caption_is_clear, distill, validate_record, DistillCriteria, DistillOutput, DistillReport, DistilledRecord,
    RejectReason,
};
pub use multihot::{decode_multihot, decode_set, encode_multihot, AttributeVector};

use crate::io::{self, IoError};

#[derive(Debug, thiserror::Error)]
pub enum TaxonomyError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("taxonomy file {path}: {message}")]
    Format { path: String, message: String },
    #[error("attribute `{attribute}` appears in both `{first}` and `{second}`")]
    DuplicateAttribute {
        attribute: String,
        first: String,
        second: String,
    },
    #[error("category `{0}` has no attributes")]
    EmptyCategory(String),
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("synonym `{variant}` points at `{target}`, which is not a taxonomy attribute")]
    DanglingSynonym { variant: String, target: String },
    #[error("vector length {got} does not match taxonomy dimension {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("duplicate record id `{id}` (line {line})")]
    DuplicateId { id: String, line: usize },
}

/// Lowercases, trims and collapses internal whitespace.
pub fn normalize_tag(tag: &str) -> String {
    tag.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Category {
    pub name: String,
    pub attributes: Vec<String>,
}

/// The attribute vocabulary grouped into semantic categories.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConceptTaxonomy {
    categories: Vec<Category>,
    attributes: Vec<String>,
    category_of: Vec<usize>,
    index: HashMap<String, usize>,
}

#[derive(Deserialize)]
struct TaxonomyFile {
    categories: BTreeMap<String, Vec<String>>,
}

#[derive(Deserialize)]
struct SynonymFile {
    #[serde(default)]
    synonyms: BTreeMap<String, String>,
}

impl ConceptTaxonomy {
    /// Builds a taxonomy from `(category, attributes)` pairs. Names are
    /// normalized and sorted; an attribute may belong to one category only.
    pub fn new<C, A, S>(categories: C) -> Result<Self, TaxonomyError>
    where
        C: IntoIterator<Item = (S, A)>,
        A: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut sorted: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        let mut owner: BTreeMap<String, String> = BTreeMap::new();
        for (cat, attrs) in categories {
            let cat = normalize_tag(cat.as_ref());
            let entry = sorted.entry(cat.clone()).or_default();
            for a in attrs {
                let a = normalize_tag(a.as_ref());
                if a.is_empty() {
                    continue;
                }
                if let Some(prev) = owner.get(&a) {
                    if prev != &cat {
                        return Err(TaxonomyError::DuplicateAttribute {
                            attribute: a,
                            first: prev.clone(),
                            second: cat,
                        });
                    }
                }
                owner.insert(a.clone(), cat.clone());
                entry.insert(a);
            }
        }
        let mut out = Self {
            categories: Vec::new(),
            attributes: Vec::new(),
            category_of: Vec::new(),
            index: HashMap::new(),
        };
        for (ci, (name, attrs)) in sorted.into_iter().enumerate() {
            if attrs.is_empty() {
                return Err(TaxonomyError::EmptyCategory(name));
            }
            for a in &attrs {
                out.index.insert(a.clone(), out.attributes.len());
                out.attributes.push(a.clone());
                out.category_of.push(ci);
            }
            out.categories.push(Category {
                name,
                attributes: attrs.into_iter().collect(),
            });
        }
        Ok(out)
    }

    /// Parses the TOML form: a `[categories]` table of name → attribute list.
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self, TaxonomyError> {
        let file: TaxonomyFile = toml::from_str(text).map_err(|e| TaxonomyError::Format {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        Self::new(file.categories)
    }

    pub fn load(path: &Path) -> Result<Self, TaxonomyError> {
        Self::from_toml_str(&io::read_to_string(path)?, &path.display().to_string())
    }

    pub fn to_toml_string(&self) -> String {
        let mut out = String::from("[categories]\n");
        for c in &self.categories {
            let attrs: Vec<String> = c.attributes.iter().map(|a| format!("{a:?}")).collect();
            out.push_str(&format!("{:?} = [{}]\n", c.name, attrs.join(", ")));
        }
        out
    }

    /// Number of attributes (the vector dimension).
    pub fn dim(&self) -> usize {
        self.attributes.len()
    }

    pub fn categories(&self) -> &[Category] {
        &self.categories
    }

    pub fn attributes(&self) -> &[String] {
        &self.attributes
    }

    pub fn index_of(&self, attribute: &str) -> Option<usize> {
        self.index.get(attribute).copied()
    }

    pub fn contains(&self, attribute: &str) -> bool {
        self.index.contains_key(attribute)
    }

    pub fn attribute(&self, index: usize) -> &str {
        &self.attributes[index]
    }

    /// Category index of the attribute at dimension `index`.
    pub fn category_index(&self, index: usize) -> usize {
        self.category_of[index]
    }

    pub fn category_of(&self, attribute: &str) -> Option<&str> {
        self.index_of(attribute)
            .map(|i| self.categories[self.category_of[i]].name.as_str())
    }

    pub fn category_named(&self, name: &str) -> Option<&Category> {
        self.categories.iter().find(|c| c.name == name)
    }

    /// SHA-256 over the ordered `(category, attribute)` listing.
    pub fn hash(&self) -> String {
        let mut canon = String::new();
        for (i, a) in self.attributes.iter().enumerate() {
            canon.push_str(&self.categories[self.category_of[i]].name);
            canon.push('\t');
            canon.push_str(a);
            canon.push('\n');
        }
        io::sha256_hex(canon.as_bytes())
    }
}

/// Variant spelling → canonical attribute.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SynonymMap {
    map: BTreeMap<String, String>,
}

impl SynonymMap {
    /// Every target must be a taxonomy attribute.
    pub fn new<I, S>(pairs: I, taxonomy: &ConceptTaxonomy) -> Result<Self, TaxonomyError>
    where
        I: IntoIterator<Item = (S, S)>,
        S: AsRef<str>,
    {
        let mut map = BTreeMap::new();
        for (variant, target) in pairs {
            let variant = normalize_tag(variant.as_ref());
            let target = normalize_tag(target.as_ref());
            if !taxonomy.contains(&target) {
                return Err(TaxonomyError::DanglingSynonym { variant, target });
            }
            map.insert(variant, target);
        }
        Ok(Self { map })
    }

    pub fn from_toml_str(text: &str, origin: &str, taxonomy: &ConceptTaxonomy) -> Result<Self, TaxonomyError> {
        let file: SynonymFile = toml::from_str(text).map_err(|e| TaxonomyError::Format {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        Self::new(file.synonyms, taxonomy)
    }

    pub fn load(path: &Path, taxonomy: &ConceptTaxonomy) -> Result<Self, TaxonomyError> {
        Self::from_toml_str(&io::read_to_string(path)?, &path.display().to_string(), taxonomy)
    }

    pub fn get(&self, variant: &str) -> Option<&str> {
        self.map.get(variant).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Maps a raw tag onto a canonical attribute, or `None` if it is not covered.
pub fn canonicalize(tag: &str, taxonomy: &ConceptTaxonomy, synonyms: &SynonymMap) -> Option<String> {
    let norm = normalize_tag(tag);
    if let Some(target) = synonyms.get(&norm) {
        return Some(target.to_string());
    }
    taxonomy.contains(&norm).then_some(norm)
}

/// The bundled 200-attribute music taxonomy.
pub fn builtin_taxonomy() -> ConceptTaxonomy {
    ConceptTaxonomy::from_toml_str(BUILTIN_TAXONOMY, "<builtin taxonomy>").expect("bundled taxonomy is valid")
}

pub fn builtin_synonyms(taxonomy: &ConceptTaxonomy) -> Result<SynonymMap, TaxonomyError> {
    SynonymMap::from_toml_str(BUILTIN_SYNONYMS, "<builtin synonyms>", taxonomy)
}

pub const BUILTIN_TAXONOMY: &str = include_str!("../../data/taxonomy.toml");
pub const BUILTIN_SYNONYMS: &str = include_str!("../../data/synonyms.toml");
