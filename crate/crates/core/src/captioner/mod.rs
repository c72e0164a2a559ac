//! Attribute lists to captions: an HTTP text-generation endpoint or an
//! offline template engine.

mod endpoint;
pub mod mock;
mod template;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::metrics::tokenize;
use crate::taxonomy::ConceptTaxonomy;

pub use endpoint::{generate_caption, ChatCompletions, EndpointConfig, WireFormat};
pub use template::template_caption;

/// Average caption length of the published dataset, in words.
pub const DEFAULT_TARGET_WORDS: usize = 31;

#[derive(Debug, thiserror::Error)]
pub enum CaptionError {
    #[error("invalid caption request: {0}")]
    InvalidRequest(String),
    #[error("endpoint configuration: {0}")]
    Config(String),
    #[error("endpoint failed after {attempts} attempt(s): {message}")]
    Endpoint { attempts: usize, message: String },
    #[error("malformed endpoint response: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionRequest {
    pub attributes: Vec<String>,
    pub target_length_words: usize,
    pub style: String,
}

impl CaptionRequest {
    pub fn new<S: Into<String>>(attributes: impl IntoIterator<Item = S>) -> Self {
        Self {
            attributes: attributes.into_iter().map(Into::into).collect(),
            target_length_words: DEFAULT_TARGET_WORDS,
            style: "professional music description".to_string(),
        }
    }

    pub fn validate(&self) -> Result<(), CaptionError> {
        if self.attributes.is_empty() {
            return Err(CaptionError::InvalidRequest("attribute list is empty".into()));
        }
        if self.attributes.iter().any(|a| a.trim().is_empty()) {
            return Err(CaptionError::InvalidRequest("blank attribute name".into()));
        }
        if self.target_length_words == 0 {
            return Err(CaptionError::InvalidRequest("target length must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptionSource {
    Endpoint,
    Template,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionResult {
    pub caption: String,
    pub source: CaptionSource,
    pub attribute_recall: f64,
}

/// Instruction text for a text-generation model.
pub fn render_prompt(request: &CaptionRequest) -> String {
    format!(
        "Write a {style} of a piece of music in about {words} words.\n\
         Use every attribute below and do not invent instruments or genres that are not listed.\n\
         Attributes: {attrs}\n\
         Answer with the description only.",
        style = request.style.trim(),
        words = request.target_length_words,
        attrs = request.attributes.join(", "),
    )
}

/// Light plural folding: drops one trailing `s` from words longer than three
/// letters unless the word ends in `ss`.
fn fold(token: &str) -> &str {
    if token.len() > 3 && token.ends_with('s') && !token.ends_with("ss") {
        &token[..token.len() - 1]
    } else {
        token
    }
}

fn folded_tokens(text: &str) -> Vec<String> {
    tokenize(text).iter().map(|t| fold(t).to_string()).collect()
}

/// Fraction of attributes whose normalized token sequence appears contiguously
/// in the caption.
pub fn attribute_recall<S: AsRef<str>>(caption: &str, attributes: &[S]) -> f64 {
    if attributes.is_empty() {
        return 0.0;
    }
    let text = folded_tokens(caption);
    let hits = attributes
        .iter()
        .filter(|a| {
            let needle = folded_tokens(a.as_ref());
            !needle.is_empty() && text.windows(needle.len()).any(|w| w == needle.as_slice())
        })
        .count();
    hits as f64 / attributes.len() as f64
}

/// Collapses runs of whitespace and trims.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Caption backend chosen at run time.
#[derive(Debug, Clone)]
pub enum Captioner {
    Template(Option<ConceptTaxonomy>),
    Endpoint(EndpointConfig),
}

impl Captioner {
    pub fn caption(&self, request: &CaptionRequest) -> Result<CaptionResult, CaptionError> {
        match self {
            Captioner::Template(tax) => template_caption(request, tax.as_ref()),
            Captioner::Endpoint(cfg) => generate_caption(request, cfg),
        }
    }
}

/// Captions every request with at most `concurrency` in flight. Output order
/// matches input order.
pub fn caption_batch(
    captioner: &Captioner,
    requests: &[CaptionRequest],
    concurrency: usize,
) -> Vec<Result<CaptionResult, CaptionError>> {
    let workers = concurrency.clamp(1, requests.len().max(1));
    if workers == 1 {
        return requests.iter().map(|r| captioner.caption(r)).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<CaptionResult, CaptionError>>>> =
        Mutex::new((0..requests.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(req) = requests.get(i) else { break };
                let out = captioner.caption(req);
                slots.lock().expect("caption worker panicked")[i] = Some(out);
            });
        }
    });
    slots
        .into_inner()
        .expect("caption worker panicked")
        .into_iter()
        .map(|r| r.expect("every slot filled"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prompt_is_deterministic_and_contains_attributes() {
        let req = CaptionRequest::new(["folk", "acoustic guitar", "upbeat"]);
        let p = render_prompt(&req);
        assert_eq!(p, render_prompt(&req));
        for a in &req.attributes {
            assert!(p.contains(a.as_str()));
        }
        assert!(p.contains("31 words"));
        let single = render_prompt(&CaptionRequest::new(["piano"]));
        let slot = single.lines().find(|l| l.starts_with("Attributes:")).unwrap();
        assert_eq!(slot.matches("piano").count(), 1);
    }

    #[test]
    fn recall_counts() {
        let attrs = ["folk", "piano", "upbeat", "slow tempo"];
        assert_eq!(attribute_recall("An upbeat folk song on piano at a slow tempo.", &attrs), 1.0);
        assert_eq!(attribute_recall("Nothing relevant here.", &attrs), 0.0);
        assert_eq!(attribute_recall("Folk music with a PIANO.", &attrs), 0.5);
    }

    #[test]
    fn recall_folds_plurals_and_case() {
        assert_eq!(attribute_recall("Loud Acoustic Drum and male vocals", &["acoustic drums", "male vocal"]), 1.0);
        assert_eq!(attribute_recall("a bass line", &["bass"]), 1.0);
        assert_eq!(attribute_recall("4/4 time signature", &["4/4 time"]), 1.0);
        // tokens must match whole words
        assert_eq!(attribute_recall("popular", &["pop"]), 0.0);
    }

    #[test]
    fn empty_request_rejected() {
        let req = CaptionRequest::new(Vec::<String>::new());
        assert!(req.validate().is_err());
        assert!(Captioner::Template(None).caption(&req).is_err());
    }

    #[test]
    fn batch_preserves_order() {
        let reqs: Vec<CaptionRequest> = ["jazz", "rock", "folk", "opera", "trap", "blues"]
            .iter()
            .map(|a| CaptionRequest::new([*a]))
            .collect();
        let cap = Captioner::Template(None);
        let serial = caption_batch(&cap, &reqs, 1);
        let parallel = caption_batch(&cap, &reqs, 4);
        for ((a, b), r) in serial.iter().zip(&parallel).zip(&reqs) {
            let (a, b) = (a.as_ref().unwrap(), b.as_ref().unwrap());
            assert_eq!(a, b);
            assert!(a.caption.contains(r.attributes[0].as_str()));
        }
    }
}
