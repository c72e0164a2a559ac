use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use conceptsynth::captioner::mock::{MockBehavior, MockEndpoint};
use conceptsynth::io;
use conceptsynth::pipeline::{artifacts, PipelineConfig, RunManifest, MANIFEST_FILE};
use conceptsynth::synthetic::tagged_corpus;
use conceptsynth::taxonomy::DistilledRecord;

struct Workspace {
    dir: tempfile::TempDir,
    config: PathBuf,
}

impl Workspace {
    fn new(edit: impl FnOnce(&mut PipelineConfig)) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let corpus = dir.path().join("corpus.jsonl");
        io::write_jsonl(&corpus, &tagged_corpus(600, 21)).unwrap();
        let mut cfg = PipelineConfig::default();
        cfg.seed = 3;
        cfg.paths.corpus = Some(corpus);
        cfg.paths.out_dir = dir.path().join("out");
        cfg.vae.epochs = 8;
        cfg.vae.hidden_dim = 64;
        cfg.vae.latent_dim = 16;
        cfg.sample.n = 30;
        cfg.sample.top_k = Some(3);
        cfg.tcav.random_cavs = 10;
        cfg.tcav.concept_runs = 10;
        cfg.evaluate.max_reference_records = 50;
        edit(&mut cfg);
        let config = dir.path().join("config.toml");
        std::fs::write(&config, cfg.to_toml_string()).unwrap();
        Self { dir, config }
    }

    fn out(&self, name: &str) -> PathBuf {
        self.dir.path().join("out").join(name)
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_conceptsynth"))
            .arg("--config")
            .arg(&self.config)
            .args(args)
            .env_remove("RUST_LOG")
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let out = self.run(args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        String::from_utf8(out.stdout).unwrap()
    }
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap()
}

#[test]
fn print_config_round_trips() {
    let out = Command::new(env!("CARGO_BIN_EXE_conceptsynth"))
        .args(["--print-config", "--seed", "12"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let cfg = PipelineConfig::from_toml_str(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(cfg.seed, 12);
    assert_eq!(cfg.vae.epochs, 110);
}

#[test]
fn configuration_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[vae]\nbetta = 1.0\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_conceptsynth"))
        .arg("--config")
        .arg(&bad)
        .arg("gradcheck")
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);

    let ws = Workspace::new(|c| c.vae.beta = -1.0);
    assert_eq!(code(&ws.run(&["distill"])), 2);
    let ws = Workspace::new(|c| c.paths.taxonomy = Some("/no/such/taxonomy.toml".into()));
    assert_eq!(code(&ws.run(&["distill"])), 2);
}

#[test]
fn missing_upstream_artifact_names_the_stage() {
    let ws = Workspace::new(|_| {});
    let out = ws.run(&["caption", "--template-only"]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("run `sample` first"));
    let out = ws.run(&["train-vae"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("run `distill` first"));
}

#[test]
fn empty_distillation_succeeds_with_warning() {
    let ws = Workspace::new(|c| c.distill.min_attributes = 14);
    let out = ws.run(&["distill"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("distilled output is empty"));
    assert_eq!(read(&ws.out(artifacts::DISTILLED)), b"");
    let report: serde_json::Value = serde_json::from_slice(&read(&ws.out(artifacts::DISTILL_REPORT))).unwrap();
    assert_eq!(report["retained"], 0);
    assert_eq!(report["input_records"], 600);
}

#[test]
fn stages_chain_and_rerun_byte_identically() {
    let ws = Workspace::new(|_| {});
    let distill_out = ws.ok(&["distill"]);
    assert!(distill_out.contains("1,890 of 5,521"));
    let distilled = read(&ws.out(artifacts::DISTILLED));
    ws.ok(&["distill"]);
    assert_eq!(read(&ws.out(artifacts::DISTILLED)), distilled);

    let train_out = ws.ok(&["train-vae"]);
    assert!(train_out.contains("BCE") && train_out.contains("Jaccard") && train_out.contains("Hamming"));
    let trace = std::fs::read_to_string(ws.out(artifacts::TRACE)).unwrap();
    assert_eq!(trace.lines().count(), 1 + 8);
    let ckpt = read(&ws.out(artifacts::CHECKPOINT));
    ws.ok(&["train-vae"]);
    assert_eq!(read(&ws.out(artifacts::CHECKPOINT)), ckpt);

    ws.ok(&["sample"]);
    ws.ok(&["caption", "--template-only"]);
    let dataset = std::fs::read_to_string(ws.out(artifacts::DATASET)).unwrap();
    assert_eq!(dataset.lines().count(), 30);
    assert!(dataset.lines().all(|l| !l.contains("\"caption\":\"\"")));
    ws.ok(&["evaluate"]);
    ws.ok(&["tcav"]);
    let results = std::fs::read_to_string(ws.out(artifacts::TCAV_RESULTS)).unwrap();
    assert!(results.starts_with("concept,class,layer,score,p_value,significant\n"));

    let manifest: RunManifest = serde_json::from_slice(&read(&ws.out(MANIFEST_FILE))).unwrap();
    let stages: Vec<&str> = manifest.stages.keys().map(String::as_str).collect();
    assert_eq!(stages, ["caption", "distill", "evaluate", "sample", "tcav", "train-vae"]);
    assert_eq!(manifest.stages["sample"].seed, 5);
    assert_eq!(manifest.manifest_hash, manifest.compute_hash());
}

#[test]
fn taxonomy_mismatch_is_rejected() {
    let ws = Workspace::new(|_| {});
    ws.ok(&["distill"]);
    let mut records: Vec<DistilledRecord> = io::read_jsonl(&ws.out(artifacts::DISTILLED)).unwrap();
    records[0].taxonomy_hash = Some("0".repeat(64));
    io::write_jsonl(&ws.out(artifacts::DISTILLED), &records).unwrap();
    let out = ws.run(&["train-vae"]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("taxonomy"));
}

#[test]
fn report_merges_two_metric_files() {
    let ws = Workspace::new(|_| {});
    for args in [&["distill"][..], &["train-vae"], &["sample"], &["caption"], &["evaluate", "--run", "first"]] {
        ws.ok(args);
    }
    let first = ws.dir.path().join("first.json");
    std::fs::copy(ws.out(artifacts::METRICS_JSON), &first).unwrap();
    ws.ok(&["evaluate", "--run", "second"]);
    let out = ws.ok(&["report", first.to_str().unwrap(), ws.out(artifacts::METRICS_JSON).to_str().unwrap()]);
    let header = out.lines().next().unwrap();
    assert!(header.contains("first") && header.contains("second"), "{out}");
    let csv = std::fs::read_to_string(ws.out(artifacts::REPORT_CSV)).unwrap();
    assert!(csv.starts_with("metric,first,second\n"), "{csv}");
    assert!(csv.contains("\njaccard,"));
}

#[test]
fn gradcheck_exit_code_follows_tolerance() {
    let ws = Workspace::new(|_| {});
    let out = ws.ok(&["gradcheck"]);
    assert!(out.contains("22 cases, 0 failed"));
    let strict = Workspace::new(|c| c.gradcheck.tolerance = 1e-30);
    let out = strict.run(&["gradcheck"]);
    assert_eq!(code(&out), 4);
    assert!(strict.out(artifacts::GRADCHECK_CSV).is_file());
}

#[test]
fn endpoint_failures_exit_5_without_leaking_the_token() {
    let server = MockEndpoint::start(MockBehavior::Status(503)).unwrap();
    let ws = Workspace::new(|c| {
        c.caption.endpoint.token_env = "CLI_TEST_TOKEN".into();
        c.caption.endpoint.max_retries = 1;
    });
    for stage in ["distill", "train-vae", "sample"] {
        ws.ok(&[stage]);
    }
    let out = Command::new(env!("CARGO_BIN_EXE_conceptsynth"))
        .arg("--config")
        .arg(&ws.config)
        .args(["caption", "--endpoint", &server.base_url(), "--concurrency", "1"])
        .env("CLI_TEST_TOKEN", "secret-value-123")
        .env("RUST_LOG", "trace")
        .output()
        .unwrap();
    assert_eq!(code(&out), 5);
    assert!(server.hits() >= 2);
    let all = [out.stdout, out.stderr].concat();
    assert!(!String::from_utf8_lossy(&all).contains("secret-value-123"));
    assert!(!ws.out(artifacts::DATASET).exists());
}
