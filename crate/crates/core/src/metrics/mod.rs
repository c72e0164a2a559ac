//! Attribute-vector metrics and lexical caption metrics.

mod report;
mod text;
mod vector;

pub use report::{merge_reports, MetricReport, ReportTable};
pub use text::{bleu, lcs_length, rouge_l, tokenize, RougeScore};
pub use vector::{cooccurrence, cooccurrence_cosine, diversity, hamming, jaccard, CooccurrenceMatrix};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricError {
    #[error("vector lengths differ: {left} vs {right}")]
    Length { left: usize, right: usize },
    #[error("metric needs at least one vector")]
    EmptyBatch,
    #[error("co-occurrence matrices differ in dimension: {left} vs {right}")]
    Dimension { left: usize, right: usize },
    #[error("cosine is undefined for an all-zero co-occurrence matrix")]
    ZeroMatrix,
    #[error("report: {0}")]
    Report(String),
}
