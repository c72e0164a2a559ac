//! Every stage in order, in one output directory, as the CLI runs them.
//!
//! `cargo run --release --example full_pipeline -- out-dir`

use std::path::Path;

use conceptsynth::io;
use conceptsynth::pipeline::{self, PipelineConfig};
use conceptsynth::synthetic::tagged_corpus;

/// Returns the final manifest hash.
pub fn run_example(out_dir: &Path, epochs: usize, samples: usize) -> Result<String, Box<dyn std::error::Error>> {
    std::fs::create_dir_all(out_dir)?;
    let corpus = out_dir.join("corpus.jsonl");
    io::write_jsonl(&corpus, &tagged_corpus(1200, 3))?;

    let mut config = PipelineConfig::default();
    config.seed = 42;
    config.paths.corpus = Some(corpus);
    config.paths.out_dir = out_dir.to_path_buf();
    config.vae.epochs = epochs;
    config.vae.hidden_dim = 128;
    config.vae.latent_dim = 32;
    config.sample.n = samples;
    config.tcav.random_cavs = 20;
    config.evaluate.max_reference_records = 200;

    let mut last = String::new();
    for outcome in [
        pipeline::cmd_distill(&config)?,
        pipeline::cmd_train_vae(&config)?,
        pipeline::cmd_sample(&config)?,
        pipeline::cmd_caption(&config)?,
        pipeline::cmd_evaluate(&config)?,
        pipeline::cmd_tcav(&config)?,
    ] {
        println!("== {}", outcome.stage);
        for line in outcome.summary.iter().take(12) {
            println!("{line}");
        }
        last = outcome.manifest_hash;
    }
    println!("manifest {last}");
    Ok(last)
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "pipeline-out".into());
    run_example(Path::new(&dir), 40, 300)?;
    Ok(())
}
