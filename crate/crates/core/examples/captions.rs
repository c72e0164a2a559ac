//! Captions attribute sets with the offline templates and with an
//! OpenAI-compatible endpoint (a local mock server here).

use conceptsynth::captioner::mock::{MockBehavior, MockEndpoint};
use conceptsynth::captioner::{caption_batch, CaptionRequest, Captioner, EndpointConfig};
use conceptsynth::taxonomy::builtin_taxonomy;

pub fn run_example() -> Result<Vec<String>, Box<dyn std::error::Error>> {
    let requests = vec![
        CaptionRequest::new(["jazz", "piano", "double bass", "relaxed", "slow tempo"]),
        CaptionRequest::new(["rock", "electric guitar", "drums", "energetic"]),
        CaptionRequest::new(["ambient", "synthesizer", "reverb"]),
    ];

    let templates = Captioner::Template(Some(builtin_taxonomy()));
    let mut captions = Vec::new();
    for r in caption_batch(&templates, &requests, 2) {
        let r = r?;
        println!("[template, recall {:.2}] {}", r.attribute_recall, r.caption);
        captions.push(r.caption);
    }

    let server = MockEndpoint::start(MockBehavior::Echo)?;
    std::env::set_var("CAPTIONS_EXAMPLE_TOKEN", "local-mock");
    let endpoint = Captioner::Endpoint(EndpointConfig {
        base_url: server.base_url(),
        token_env: "CAPTIONS_EXAMPLE_TOKEN".into(),
        ..EndpointConfig::default()
    });
    for r in caption_batch(&endpoint, &requests, 2) {
        let r = r?;
        println!("[endpoint, recall {:.2}] {}", r.attribute_recall, r.caption);
        captions.push(r.caption);
    }
    println!("mock server saw {} requests", server.hits());
    Ok(captions)
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()?;
    Ok(())
}
