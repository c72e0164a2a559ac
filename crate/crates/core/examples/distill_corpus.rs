//! Distills a synthetic tagged caption corpus against the built-in music
//! taxonomy and prints the rejection breakdown.
//!
//! `cargo run --example distill_corpus -- corpus.jsonl` also writes the raw
//! corpus, ready for `conceptsynth distill --corpus corpus.jsonl`.

use conceptsynth::io;
use conceptsynth::synthetic::tagged_corpus;
use conceptsynth::taxonomy::{builtin_synonyms, builtin_taxonomy, distill, DistillCriteria, DistillReport};

pub fn run_example(records: usize, save_to: Option<&std::path::Path>) -> Result<DistillReport, Box<dyn std::error::Error>> {
    let corpus = tagged_corpus(records, 11);
    if let Some(path) = save_to {
        io::write_jsonl(path, &corpus)?;
    }
    let taxonomy = builtin_taxonomy();
    let synonyms = builtin_synonyms(&taxonomy)?;
    let out = distill(&corpus, &taxonomy, &synonyms, &DistillCriteria::default());

    println!("taxonomy {} ({} attributes)", &taxonomy.hash()[..12], taxonomy.dim());
    println!("retained {} of {}", out.report.retained, out.report.input_records);
    for (reason, n) in &out.report.rejected {
        println!("  {n:>5}  {reason:?}");
    }
    if let Some(r) = out.records.first() {
        println!("first record {}: {:?}", r.id, r.attributes);
    }
    Ok(out.report)
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args().nth(1).map(std::path::PathBuf::from);
    run_example(5521, path.as_deref())?;
    Ok(())
}
