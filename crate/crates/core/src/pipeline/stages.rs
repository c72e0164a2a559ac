use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::artifacts as art;
use super::manifest::{RunManifest, StageRecord};
use super::{gradcheck_csv, gradcheck_suite, CaptionMode, PipelineConfig, PipelineError, Stage};
use crate::captioner::{attribute_recall, caption_batch, CaptionRequest, Captioner};
use crate::io::{self, IoError};
use crate::metrics::{bleu, cooccurrence, cooccurrence_cosine, diversity, merge_reports, rouge_l, MetricReport};
use crate::sampler::{assemble_records, sample_conditional, sample_unconditional, DatasetRecord};
use crate::synthetic::{planted_concept_data, PlantedConceptConfig};
use crate::taxonomy::{
    builtin_synonyms, builtin_taxonomy, distill, encode_multihot, load_corpus, AttributeVector, ConceptTaxonomy,
    DistilledRecord, SynonymMap,
};
use crate::tcav::{
    class_examples, concept_pools, load_class_examples, load_concept_pools, results_csv, run_tcav,
    train_probe_classifier, ClassLine, ConceptLabel, ConceptLine, ProbeClassifier, ProbeConfig,
};
use crate::vae::{
    latent_rows, load_vae, save_vae, train, write_latents_csv, write_trace_csv, CollapseReport, EpochStats,
    ReconstructionMetrics, VaeConfig,
};

/// What a stage wrote and what it has to say about it.
#[derive(Debug, Clone, PartialEq)]
pub struct StageOutcome {
    pub stage: &'static str,
    pub outputs: Vec<PathBuf>,
    /// Human-readable result lines.
    pub summary: Vec<String>,
    pub warnings: Vec<String>,
    pub manifest_hash: String,
}

/// Final numbers of a VAE training run, kept for the evaluate stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub records: usize,
    pub taxonomy_hash: String,
    pub final_epoch: Option<EpochStats>,
    pub validation: ReconstructionMetrics,
    pub collapse: CollapseReport,
}

/// Bookkeeping shared by every stage: input/output hashes, timing, manifest.
struct StageRun<'a> {
    config: &'a PipelineConfig,
    stage: Stage,
    started: Instant,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
    written: Vec<PathBuf>,
    summary: Vec<String>,
    warnings: Vec<String>,
}

impl<'a> StageRun<'a> {
    fn start(config: &'a PipelineConfig, stage: Stage) -> Result<Self, PipelineError> {
        config.validate()?;
        let dir = &config.paths.out_dir;
        std::fs::create_dir_all(dir).map_err(|source| IoError::File {
            path: dir.clone(),
            source,
        })?;
        log::info!("stage {} (seed {})", stage.name(), config.stage_seed(stage));
        Ok(Self {
            config,
            stage,
            started: Instant::now(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            written: Vec::new(),
            summary: Vec::new(),
            warnings: Vec::new(),
        })
    }

    fn seed(&self) -> u64 {
        self.config.stage_seed(self.stage)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.config.out_path(name)
    }

    /// An artifact of an earlier stage; missing files name that stage.
    fn upstream(&mut self, name: &str, producer: Stage) -> Result<PathBuf, PipelineError> {
        let path = self.path(name);
        if !path.is_file() {
            return Err(PipelineError::MissingArtifact {
                path,
                stage: producer.name(),
            });
        }
        self.inputs.insert(name.to_string(), io::sha256_file(&path)?);
        Ok(path)
    }

    fn external(&mut self, path: &Path) -> Result<(), PipelineError> {
        self.inputs
            .insert(path.display().to_string(), io::sha256_file(path)?);
        Ok(())
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, PipelineError> {
        let path = self.path(name);
        io::write_atomic(&path, bytes)?;
        self.outputs.insert(name.to_string(), io::sha256_hex(bytes));
        self.written.push(path.clone());
        Ok(path)
    }

    /// Records a file some module wrote itself.
    fn wrote(&mut self, name: &str) -> Result<(), PipelineError> {
        let path = self.path(name);
        self.outputs.insert(name.to_string(), io::sha256_file(&path)?);
        self.written.push(path);
        Ok(())
    }

    fn say(&mut self, line: impl Into<String>) {
        self.summary.push(line.into());
    }

    fn warn(&mut self, line: impl Into<String>) {
        let line = line.into();
        log::warn!("{line}");
        self.warnings.push(line);
    }

    fn finish(self) -> Result<StageOutcome, PipelineError> {
        let dir = &self.config.paths.out_dir;
        let mut manifest = RunManifest::load_or_new(dir, &self.config.hash())?;
        manifest.record(
            self.stage.name(),
            StageRecord {
                seed: self.seed(),
                config_hash: self.config.hash(),
                wall_time_secs: self.started.elapsed().as_secs_f64(),
                inputs: self.inputs,
                outputs: self.outputs,
            },
        );
        manifest.write(dir)?;
        Ok(StageOutcome {
            stage: self.stage.name(),
            outputs: self.written,
            summary: self.summary,
            warnings: self.warnings,
            manifest_hash: manifest.manifest_hash,
        })
    }

    fn taxonomy(&mut self) -> Result<ConceptTaxonomy, PipelineError> {
        match self.config.paths.taxonomy.clone() {
            Some(p) => {
                self.external(&p)?;
                Ok(ConceptTaxonomy::load(&p)?)
            }
            None => Ok(builtin_taxonomy()),
        }
    }

    fn synonyms(&mut self, taxonomy: &ConceptTaxonomy) -> Result<SynonymMap, PipelineError> {
        match self.config.paths.synonyms.clone() {
            Some(p) => {
                self.external(&p)?;
                Ok(SynonymMap::load(&p, taxonomy)?)
            }
            None => Ok(builtin_synonyms(taxonomy)?),
        }
    }
}

fn json_pretty<T: Serialize>(value: &T) -> Result<Vec<u8>, PipelineError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| IoError::Serialize(e.to_string()))?;
    Ok((text + "\n").into_bytes())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, PipelineError> {
    serde_json::from_str(&io::read_to_string(path)?)
        .map_err(|e| PipelineError::Input(format!("{}: {e}", path.display())))
}

fn encode_records(records: &[DistilledRecord], taxonomy: &ConceptTaxonomy) -> Result<Vec<AttributeVector>, PipelineError> {
    records
        .iter()
        .map(|r| encode_multihot(&r.attributes, taxonomy).map_err(|e| PipelineError::Input(format!("record {}: {e}", r.id))))
        .collect()
}

/// Filters the source corpus against the taxonomy and caption criteria.
pub fn cmd_distill(config: &PipelineConfig) -> Result<StageOutcome, PipelineError> {
    let mut run = StageRun::start(config, Stage::Distill)?;
    let corpus_path = config
        .paths
        .corpus
        .clone()
        .ok_or_else(|| PipelineError::Config("paths.corpus is not set".into()))?;
    run.external(&corpus_path)?;
    let corpus = load_corpus(&corpus_path)?;
    let taxonomy = run.taxonomy()?;
    let synonyms = run.synonyms(&taxonomy)?;
    let out = distill(&corpus, &taxonomy, &synonyms, &config.distill);

    run.write(art::DISTILLED, io::jsonl_string(&out.records)?.as_bytes())?;
    run.write(art::DISTILL_REPORT, &json_pretty(&out.report)?)?;
    let r = &out.report;
    run.say(format!(
        "retained {} of {} records ({:.1}%; the reference corpus kept 1,890 of 5,521, 34.2%)",
        r.retained,
        r.input_records,
        100.0 * r.retained as f64 / r.input_records.max(1) as f64
    ));
    for (reason, n) in &r.rejected {
        run.say(format!("  rejected {n:>6}  {}", serde_json::to_value(reason).unwrap_or_default().as_str().unwrap_or("?")));
    }
    run.say(format!("  {} distinct unmapped tags", r.unmapped_tags.len()));
    if out.records.is_empty() {
        run.warn("no record met the distillation criteria; distilled output is empty");
    }
    run.finish()
}

/// Trains the β-VAE on the distilled attribute vectors.
pub fn cmd_train_vae(config: &PipelineConfig) -> Result<StageOutcome, PipelineError> {
    let mut run = StageRun::start(config, Stage::TrainVae)?;
    let distilled = run.upstream(art::DISTILLED, Stage::Distill)?;
    let taxonomy = run.taxonomy()?;
    let records: Vec<DistilledRecord> = io::read_jsonl(&distilled)?;
    let hash = taxonomy.hash();
    if let Some(r) = records
        .iter()
        .find(|r| r.taxonomy_hash.as_deref().is_some_and(|h| h != hash))
    {
        return Err(PipelineError::Input(format!(
            "record {} was distilled with taxonomy {}, but the configured taxonomy is {hash}; rerun `distill`",
            r.id,
            r.taxonomy_hash.as_deref().unwrap_or_default()
        )));
    }
    if records.is_empty() {
        return Err(PipelineError::Input(format!("{} holds no records; nothing to train on", distilled.display())));
    }
    let vectors = encode_records(&records, &taxonomy)?;
    let vae_config = VaeConfig {
        seed: run.seed(),
        ..config.vae.clone()
    };
    let (model, trace) = train(&vectors, &vae_config)?;

    save_vae(&model, &vae_config, &hash, &run.path(art::CHECKPOINT), &run.path(art::SIDECAR))?;
    run.wrote(art::CHECKPOINT)?;
    run.wrote(art::SIDECAR)?;
    write_trace_csv(&run.path(art::TRACE), &trace)?;
    run.wrote(art::TRACE)?;
    let ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
    write_latents_csv(&run.path(art::LATENTS), &latent_rows(&model, &ids, &vectors, &taxonomy)?)?;
    run.wrote(art::LATENTS)?;
    let summary = TrainSummary {
        records: records.len(),
        taxonomy_hash: hash,
        final_epoch: trace.last().copied(),
        validation: trace.validation,
        collapse: trace.collapse,
    };
    run.write(art::TRAIN_SUMMARY, &json_pretty(&summary)?)?;

    let v = &trace.validation;
    run.say(format!(
        "trained {} epochs on {} records; validation ({}): BCE {:.4}, Jaccard {:.4}, Hamming {:.4}",
        trace.epochs.len(),
        records.len(),
        v.count,
        v.bce,
        v.jaccard,
        v.hamming
    ));
    let c = &trace.collapse;
    run.say(format!(
        "unconditional samples: {} unique of {}, diversity {:.4}",
        c.unique, c.samples, c.diversity
    ));
    if c.collapsed {
        run.warn(format!(
            "possible model collapse: {:.0}% of samples are the same vector",
            100.0 * c.modal_fraction
        ));
    }
    run.finish()
}

/// Draws attribute vectors from the trained VAE.
pub fn cmd_sample(config: &PipelineConfig) -> Result<StageOutcome, PipelineError> {
    let mut run = StageRun::start(config, Stage::Sample)?;
    let ckpt = run.upstream(art::CHECKPOINT, Stage::TrainVae)?;
    let sidecar = run.upstream(art::SIDECAR, Stage::TrainVae)?;
    let taxonomy = run.taxonomy()?;
    let (model, _) = load_vae(&ckpt, &sidecar, Some(&taxonomy.hash()))?;
    let s = &config.sample;
    let sampler = s.sampler_config(run.seed());
    let batch = match s.seed_spec() {
        Some(spec) => sample_conditional(&model, &spec, &taxonomy, s.n, &sampler)?,
        None => sample_unconditional(&model, s.n, &sampler)?,
    };
    let blank = vec![""; batch.vectors.len()];
    let records = assemble_records(&batch, &blank, &taxonomy, &s.id_prefix)?;
    run.write(art::SAMPLES, io::jsonl_string(&records)?.as_bytes())?;

    let mean_attrs = batch.vectors.iter().map(|v| v.popcount() as f64).sum::<f64>() / batch.vectors.len() as f64;
    run.say(format!(
        "{} {} samples, {:.2} attributes on average, {} draws rejected by attribute bounds",
        batch.vectors.len(),
        if s.seed_spec().is_some() { "conditional" } else { "unconditional" },
        mean_attrs,
        batch.rejections
    ));
    if batch.vectors.len() > 1 {
        run.say(format!("diversity {:.4}", diversity(&batch.vectors)?));
    }
    run.finish()
}

/// Fills in captions for the sampled records.
pub fn cmd_caption(config: &PipelineConfig) -> Result<StageOutcome, PipelineError> {
    let mut run = StageRun::start(config, Stage::Caption)?;
    let samples = run.upstream(art::SAMPLES, Stage::Sample)?;
    let taxonomy = run.taxonomy()?;
    let mut records: Vec<DatasetRecord> = io::read_jsonl(&samples)?;
    let c = &config.caption;
    let captioner = match c.mode {
        CaptionMode::Template => Captioner::Template(Some(taxonomy)),
        CaptionMode::Endpoint => {
            c.endpoint.validate()?;
            Captioner::Endpoint(c.endpoint.clone())
        }
    };
    let requests: Vec<CaptionRequest> = records
        .iter()
        .map(|r| CaptionRequest {
            attributes: r.attributes.clone(),
            target_length_words: c.target_words,
            style: c.style.clone(),
        })
        .collect();
    let results = caption_batch(&captioner, &requests, c.concurrency);
    let mut recall = 0.0;
    for (record, result) in records.iter_mut().zip(results) {
        let result = result.map_err(|e| {
            let e = PipelineError::from(e);
            match e {
                PipelineError::Endpoint(m) => PipelineError::Endpoint(format!("record {}: {m}", record.id)),
                PipelineError::Input(m) => PipelineError::Input(format!("record {}: {m}", record.id)),
                other => other,
            }
        })?;
        recall += result.attribute_recall;
        record.caption = result.caption;
    }
    run.write(art::DATASET, io::jsonl_string(&records)?.as_bytes())?;
    run.say(format!(
        "captioned {} records via {}; mean attribute recall {:.3}",
        records.len(),
        match c.mode {
            CaptionMode::Template => "templates",
            CaptionMode::Endpoint => "the endpoint",
        },
        recall / records.len().max(1) as f64
    ));
    run.finish()
}

/// Stage-1 and stage-2 metrics for the current output directory.
pub fn cmd_evaluate(config: &PipelineConfig) -> Result<StageOutcome, PipelineError> {
    let mut run = StageRun::start(config, Stage::Evaluate)?;
    let distilled_path = run.upstream(art::DISTILLED, Stage::Distill)?;
    let summary_path = run.upstream(art::TRAIN_SUMMARY, Stage::TrainVae)?;
    let dataset_path = run.upstream(art::DATASET, Stage::Caption)?;
    let taxonomy = run.taxonomy()?;
    let distilled: Vec<DistilledRecord> = io::read_jsonl(&distilled_path)?;
    let summary: TrainSummary = read_json(&summary_path)?;
    let dataset: Vec<DatasetRecord> = io::read_jsonl(&dataset_path)?;
    if dataset.is_empty() || distilled.is_empty() {
        return Err(PipelineError::Input("evaluation needs non-empty distilled and captioned files".into()));
    }
    let e = &config.evaluate;
    let mut report = MetricReport::new(&e.run);

    report.insert("bce", summary.validation.bce);
    report.insert("jaccard", summary.validation.jaccard);
    report.insert("hamming", summary.validation.hamming);
    if let Some(last) = summary.final_epoch {
        report.insert("kl", last.kl);
    }

    let generated: Vec<AttributeVector> = dataset
        .iter()
        .map(|r| encode_multihot(&r.attributes, &taxonomy))
        .collect::<Result<_, _>>()?;
    let training = encode_records(&distilled, &taxonomy)?;
    if generated.len() > 1 {
        report.insert("diversity", diversity(&generated)?);
    }
    match cooccurrence_cosine(&cooccurrence(&generated)?, &cooccurrence(&training)?) {
        Ok(cos) => {
            report.insert("cosine", cos);
        }
        Err(err) => run.warn(format!("co-occurrence cosine skipped: {err}")),
    }
    report.insert(
        "mean_attributes",
        generated.iter().map(|v| v.popcount() as f64).sum::<f64>() / generated.len() as f64,
    );
    let recall = dataset
        .iter()
        .map(|r| attribute_recall(&r.caption, &r.attributes))
        .sum::<f64>()
        / dataset.len() as f64;
    report.insert("attribute_recall", recall);

    // template captions of distilled attribute sets against their source captions
    let limit = if e.max_reference_records == 0 { distilled.len() } else { e.max_reference_records.min(distilled.len()) };
    let refs = &distilled[..limit];
    let captioner = Captioner::Template(Some(taxonomy));
    let requests: Vec<CaptionRequest> = refs.iter().map(|r| CaptionRequest::new(r.attributes.clone())).collect();
    let (mut b, mut rl) = (0.0, 0.0);
    for (r, res) in refs.iter().zip(caption_batch(&captioner, &requests, 1)) {
        let caption = res?.caption;
        b += bleu(&caption, &[&r.caption], e.bleu_max_n);
        rl += rouge_l(&caption, &r.caption).f_score;
    }
    report.insert("bleu", b / limit as f64);
    report.insert("rouge_l", rl / limit as f64);

    report.count("generated", dataset.len());
    report.count("distilled", distilled.len());
    report.count("references", limit);
    report.config = serde_json::json!({
        "config_hash": config.hash(),
        "seed": config.seed,
        "beta": config.vae.beta,
        "epochs": config.vae.epochs,
        "caption_mode": config.caption.mode,
    });
    run.write(art::METRICS_JSON, report.to_json()?.as_bytes())?;
    run.write(art::METRICS_CSV, report.to_csv()?.as_bytes())?;
    for (name, value) in &report.metrics {
        run.say(format!("{name:<18}{value:.4}"));
    }
    run.finish()
}

const PLANTED_CLASSES: usize = 4;
/// Probed layer of the built-in probe when none is configured.
const BUILTIN_LAYER: &str = "hidden1";

fn builtin_tcav_inputs(
    run: &mut StageRun<'_>,
    probe_config: &ProbeConfig,
) -> Result<(ProbeClassifier, Vec<ConceptLine>, Vec<ClassLine>), PipelineError> {
    let data = planted_concept_data(&PlantedConceptConfig {
        classes: PLANTED_CLASSES,
        seed: run.seed(),
        ..PlantedConceptConfig::default()
    });
    let classes: Vec<String> = (0..PLANTED_CLASSES).map(|k| format!("class_{k}")).collect();
    let cfg = ProbeConfig {
        seed: run.seed(),
        ..probe_config.clone()
    };
    let (model, report) = train_probe_classifier(&data.inputs, &data.labels, &classes, &cfg)?;
    run.say(format!(
        "probe classifier on planted-concept data: validation accuracy {:.3}",
        report.validation_accuracy
    ));

    let mut concepts = Vec::new();
    let named_bits = (0..PLANTED_CLASSES)
        .map(|k| (format!("concept_{k}"), k))
        .chain(std::iter::once(("neutral".to_string(), data.neutral_bit)));
    for (name, bit) in named_bits {
        for (r, bits) in data.bits.iter().enumerate() {
            concepts.push(ConceptLine {
                concept: name.clone(),
                label: if bits.get(bit) { ConceptLabel::Pos } else { ConceptLabel::Neg },
                id: Some(format!("x{r:04}")),
                vector: data.inputs.row(r).to_vec(),
            });
        }
    }
    let class_lines = data
        .labels
        .iter()
        .enumerate()
        .map(|(r, &l)| ClassLine {
            class: classes[l].clone(),
            vector: data.inputs.row(r).to_vec(),
        })
        .collect();
    Ok((model, concepts, class_lines))
}

/// TCAV scores for every (concept, class) pair.
pub fn cmd_tcav(config: &PipelineConfig) -> Result<StageOutcome, PipelineError> {
    let mut run = StageRun::start(config, Stage::Tcav)?;
    let t = &config.tcav;
    let mut tcav_config = t.tcav_config(run.seed());
    let (model, pools, classes) = match (&t.model, &t.concepts, &t.classes) {
        (Some(m), Some(c), Some(k)) => {
            for p in [m, c, k] {
                run.external(p)?;
            }
            let model = ProbeClassifier::load(m)?;
            let pools = load_concept_pools(c)?;
            let classes = load_class_examples(&model, k)?;
            (model, pools, classes)
        }
        _ => {
            let (model, concept_lines, class_lines) = builtin_tcav_inputs(&mut run, &t.probe)?;
            if tcav_config.layer.is_none() {
                tcav_config.layer = Some(BUILTIN_LAYER.to_string());
            }
            run.write(art::PROBE, model.to_json(run.seed())?.as_bytes())?;
            run.write(art::CONCEPTS, io::jsonl_string(&concept_lines)?.as_bytes())?;
            run.write(art::CLASSES, io::jsonl_string(&class_lines)?.as_bytes())?;
            let pools = concept_pools(&concept_lines);
            let classes = class_examples(&model, &class_lines)?;
            (model, pools, classes)
        }
    };
    let results = run_tcav(&model, &pools, &classes, &tcav_config)?;
    run.write(art::TCAV_RESULTS, results_csv(&results)?.as_bytes())?;
    if let Some(first) = results.first() {
        run.say(format!("layer {}", first.layer));
    }
    for r in &results {
        run.say(format!(
            "{:<14}{:<12}score {:.3}  p {:.2e}{}",
            r.concept,
            r.class,
            r.score,
            r.p_value,
            if r.significant { "  significant" } else { "" }
        ));
    }
    run.finish()
}

/// Joins metric reports into one comparison table.
pub fn cmd_report(config: &PipelineConfig, inputs: &[PathBuf]) -> Result<StageOutcome, PipelineError> {
    let mut run = StageRun::start(config, Stage::Report)?;
    if inputs.is_empty() {
        return Err(PipelineError::Config("report needs at least one metrics JSON file".into()));
    }
    let mut reports = Vec::with_capacity(inputs.len());
    for p in inputs {
        run.external(p)?;
        reports.push(
            MetricReport::from_json(&io::read_to_string(p)?)
                .map_err(|e| PipelineError::Input(format!("{}: {e}", p.display())))?,
        );
    }
    let table = merge_reports(&reports)?;
    run.write(art::REPORT_CSV, table.to_csv()?.as_bytes())?;
    for line in table.to_text().lines() {
        run.say(line.to_string());
    }
    run.finish()
}

/// Finite-difference checks of the analytic gradients. Fails with a
/// numerical error when any case reaches the tolerance.
pub fn cmd_gradcheck(config: &PipelineConfig) -> Result<StageOutcome, PipelineError> {
    let mut run = StageRun::start(config, Stage::Gradcheck)?;
    let g = &config.gradcheck;
    let cases = gradcheck_suite(g.networks, run.seed(), g.epsilon)?;
    run.write(art::GRADCHECK_CSV, gradcheck_csv(&cases, g.tolerance)?.as_bytes())?;
    let worst = cases
        .iter()
        .max_by(|a, b| a.max_relative_error.total_cmp(&b.max_relative_error))
        .expect("suite is never empty");
    let failed = cases.iter().filter(|c| !c.passes(g.tolerance)).count();
    run.say(format!(
        "{} cases, {} failed; worst {} at relative error {:.2e}",
        cases.len(),
        failed,
        worst.name,
        worst.max_relative_error
    ));
    let outcome = run.finish()?;
    if failed > 0 {
        return Err(PipelineError::Numerical(format!(
            "{failed} gradient check(s) at or above relative error {:.0e}; see {}",
            g.tolerance,
            config.out_path(art::GRADCHECK_CSV).display()
        )));
    }
    Ok(outcome)
}
