//! Every example runs, at reduced sizes where training is involved.

#[path = "../examples/block_vae.rs"]
mod block_vae;
#[path = "../examples/captions.rs"]
mod captions;
#[path = "../examples/conditional_sampling.rs"]
mod conditional_sampling;
#[path = "../examples/distill_corpus.rs"]
mod distill_corpus;
#[path = "../examples/full_pipeline.rs"]
mod full_pipeline;
#[path = "../examples/gradcheck.rs"]
mod gradcheck;
#[path = "../examples/tcav_planted.rs"]
mod tcav_planted;
#[path = "../examples/text_metrics.rs"]
mod text_metrics;

#[test]
fn distill_corpus_keeps_about_a_third() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("corpus.jsonl");
    let report = distill_corpus::run_example(5521, Some(&path)).unwrap();
    let share = report.retained as f64 / report.input_records as f64;
    assert!((0.25..0.45).contains(&share), "{share}");
    assert_eq!(std::fs::read_to_string(path).unwrap().lines().count(), 5521);
}

#[test]
fn block_vae_short_run() {
    let s = block_vae::run_example(15, 0.25).unwrap();
    assert!(s.jaccard > 0.3, "{s:?}");
    assert!(s.hamming < 0.1);
    assert!((0.0..=1.0).contains(&s.diversity));
    assert!((-1.0..=1.0).contains(&s.cosine));
    assert!(!s.collapsed);
}

#[test]
fn conditional_sampling_short_run() {
    let enrichment = conditional_sampling::run_example(10).unwrap();
    assert!(enrichment.is_finite() && enrichment >= 0.0);
}

#[test]
fn captions_template_and_mock_endpoint() {
    let captions = captions::run_example().unwrap();
    assert_eq!(captions.len(), 6);
    assert!(captions.iter().all(|c| !c.is_empty()));
}

#[test]
fn text_metrics_table() {
    let table = text_metrics::run_example().unwrap();
    assert!(table.contains("beta-0.25") && table.contains("beta-4"));
}

#[test]
fn tcav_planted_finds_planted_concepts() {
    let results = tcav_planted::run_example(1).unwrap();
    for r in results.iter().filter(|r| r.concept.trim_start_matches("concept_") == r.class.trim_start_matches("class_")) {
        assert!(r.score >= 0.9 && r.significant, "{r:?}");
    }
}

#[test]
fn gradcheck_suite_passes() {
    let cases = gradcheck::run_example(20).unwrap();
    assert!(cases.iter().all(|c| c.passes(1e-4)));
}

#[test]
fn full_pipeline_small() {
    let dir = tempfile::tempdir().unwrap();
    let hash = full_pipeline::run_example(dir.path(), 25, 50).unwrap();
    assert_eq!(hash.len(), 64);
    assert!(dir.path().join("tcav_results.csv").is_file());
}
