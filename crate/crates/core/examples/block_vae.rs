//! Trains the β-VAE on a planted co-occurrence corpus and reports
//! reconstruction, diversity and co-occurrence fidelity.
//!
//! `cargo run --release --example block_vae -- 110 0.25`

use conceptsynth::metrics::{cooccurrence, cooccurrence_cosine, diversity};
use conceptsynth::sampler::{sample_unconditional, SamplerConfig, ThresholdMode};
use conceptsynth::synthetic::{block_corpus, BlockCorpusConfig};
use conceptsynth::vae::{train, VaeConfig};

#[derive(Debug)]
pub struct BlockVaeSummary {
    pub jaccard: f64,
    pub hamming: f64,
    pub diversity: f64,
    pub cosine: f64,
    pub collapsed: bool,
}

pub fn run_example(epochs: usize, beta: f64) -> Result<BlockVaeSummary, Box<dyn std::error::Error>> {
    let corpus = block_corpus(&BlockCorpusConfig::default());
    let config = VaeConfig {
        epochs,
        beta,
        ..VaeConfig::default()
    };
    let (model, trace) = train(&corpus.vectors, &config)?;

    let samples = sample_unconditional(&model, 1000, &SamplerConfig::unbounded(ThresholdMode::Fixed(0.5), 3))?;
    let cosine = cooccurrence_cosine(&cooccurrence(&samples.vectors)?, &cooccurrence(&corpus.vectors)?)?;
    let summary = BlockVaeSummary {
        jaccard: trace.validation.jaccard,
        hamming: trace.validation.hamming,
        diversity: diversity(&samples.vectors)?,
        cosine,
        collapsed: trace.collapse.collapsed,
    };
    for e in trace.epochs.iter().step_by(10.max(epochs / 10)) {
        println!("epoch {:>3}  bce {:8.4}  kl {:8.4}", e.epoch, e.bce, e.kl);
    }
    println!("{summary:#?}");
    Ok(summary)
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let epochs = args.next().map(|s| s.parse()).transpose()?.unwrap_or(110);
    let beta = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0.25);
    run_example(epochs, beta)?;
    Ok(())
}
