//! Conditional generation: force attributes on or off and see which other
//! attributes the model brings along.

use conceptsynth::sampler::{marginal_frequencies, sample_conditional, sample_unconditional, SamplerConfig, SeedSpec, ThresholdMode};
use conceptsynth::synthetic::{block_corpus, block_taxonomy, BlockCorpusConfig};
use conceptsynth::taxonomy::decode_multihot;
use conceptsynth::vae::{train, VaeConfig};

/// Returns the enrichment of the seed block's other members over
/// unconditional sampling.
pub fn run_example(epochs: usize) -> Result<f64, Box<dyn std::error::Error>> {
    let corpus_cfg = BlockCorpusConfig::default();
    let corpus = block_corpus(&corpus_cfg);
    let taxonomy = block_taxonomy(&corpus_cfg);
    let (model, _) = train(&corpus.vectors, &VaeConfig { epochs, ..VaeConfig::default() })?;

    let spec = SeedSpec::new(["b03_a0"], ["b07_a0", "b07_a1"]);
    let sampler = SamplerConfig::unbounded(ThresholdMode::Fixed(0.5), 5);
    let cond = sample_conditional(&model, &spec, &taxonomy, 500, &sampler)?;
    let free = sample_unconditional(&model, 500, &sampler)?;
    assert!(cond.vectors.iter().all(|v| spec.is_satisfied_by(v, &taxonomy)));

    let (pc, pu) = (marginal_frequencies(&cond.vectors), marginal_frequencies(&free.vectors));
    let block: Vec<usize> = corpus.blocks[3].iter().copied().filter(|&i| i != corpus.blocks[3][0]).collect();
    let mean = |p: &[f64]| block.iter().map(|&i| p[i]).sum::<f64>() / block.len() as f64;
    let enrichment = mean(&pc) / mean(&pu).max(1e-9);

    for v in cond.vectors.iter().take(5) {
        println!("{:?}", decode_multihot(v, &taxonomy)?);
    }
    println!("block_03 co-attribute rate: conditional {:.3}, unconditional {:.3}, enrichment {enrichment:.2}", mean(&pc), mean(&pu));
    Ok(enrichment)
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example(110)?;
    Ok(())
}
