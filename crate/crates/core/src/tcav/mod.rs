//! Concept activation vectors and TCAV scores for dense classifiers.

mod cav;
mod probe;
mod score;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::io::{self, IoError};
use crate::nncore::{Matrix, NnError, Rng};

pub use cav::{
    train_cav, train_cav_on_activations, Cav, CavConfig, ConceptExample, ConceptExampleSet, MIN_CONCEPT_EXAMPLES,
    WEAK_CAV_ACCURACY,
};
pub use probe::{train_probe_classifier, ProbeClassifier, ProbeConfig, ProbeReport};
pub use score::{
    directional_derivative, layer_gradients, logit_from_activation, random_directions, significance_test,
    tcav_score, Significance, MIN_RUNS,
};

#[derive(Debug, thiserror::Error)]
pub enum TcavError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("unknown layer {name}; available: {}", .available.join(", "))]
    UnknownLayer { name: String, available: Vec<String> },
    #[error("{what}: expected dimension {expected}, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },
    #[error("{what}: need at least {needed} examples, got {got}")]
    InsufficientExamples { what: String, needed: usize, got: usize },
    #[error("concept {concept} is unbalanced: {positives} positives vs {negatives} negatives")]
    Unbalanced { concept: String, positives: usize, negatives: usize },
    #[error("concept {concept} has no activation variance at layer {layer}")]
    DegenerateConcept { concept: String, layer: String },
    #[error("training data holds a single class")]
    SingleClass,
    #[error("probe model: {0}")]
    Model(String),
    #[error("invalid TCAV setting: {0}")]
    Config(String),
}

pub(crate) fn layer_index(model: &ProbeClassifier, layer: &str) -> Result<usize, TcavError> {
    model.network().layer_index(layer).ok_or_else(|| TcavError::UnknownLayer {
        name: layer.to_string(),
        available: model.layer_names().to_vec(),
    })
}

/// Forward pass truncated after `layer`; one activation row per input row.
pub fn extract_activations(model: &ProbeClassifier, layer: &str, inputs: &Matrix) -> Result<Matrix, TcavError> {
    let l = layer_index(model, layer)?;
    if inputs.cols() != model.input_dim() {
        return Err(TcavError::Dimension {
            what: "input",
            expected: model.input_dim(),
            got: inputs.cols(),
        });
    }
    Ok(model.network().infer_range(inputs, 0, l + 1)?)
}

/// Positive examples plus a pool of negatives to resample from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptPool {
    pub concept: String,
    pub positives: Vec<ConceptExample>,
    pub negatives: Vec<ConceptExample>,
}

impl ConceptPool {
    /// A balanced set: both sides cut to the smaller size after shuffling.
    pub fn resample(&self, rng: &mut Rng) -> ConceptExampleSet {
        let m = self.positives.len().min(self.negatives.len());
        let mut take = |pool: &[ConceptExample]| {
            let mut idx: Vec<usize> = (0..pool.len()).collect();
            rng.shuffle(&mut idx);
            let mut idx = idx[..m].to_vec();
            idx.sort_unstable();
            idx.into_iter().map(|i| pool[i].clone()).collect::<Vec<_>>()
        };
        let positives = take(&self.positives);
        let negatives = take(&self.negatives);
        ConceptExampleSet {
            concept: self.concept.clone(),
            positives,
            negatives,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassExamples {
    pub class: usize,
    pub inputs: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TcavConfig {
    /// Probed layer; the penultimate layer when unset.
    pub layer: Option<String>,
    pub alpha: f64,
    pub concept_runs: usize,
    pub random_cavs: usize,
    pub cav: CavConfig,
    pub seed: u64,
}

impl Default for TcavConfig {
    fn default() -> Self {
        Self {
            layer: None,
            alpha: 0.05,
            concept_runs: 10,
            random_cavs: 50,
            cav: CavConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TcavResult {
    pub concept: String,
    pub class: String,
    pub layer: String,
    /// Lower median of `concept_scores`, so still a fraction of the examples.
    pub score: f64,
    pub concept_scores: Vec<f64>,
    pub random_scores: Vec<f64>,
    pub cav_accuracy: f64,
    pub p_value: f64,
    pub significant: bool,
}

fn lower_median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v[(v.len() - 1) / 2]
}

/// Full TCAV protocol: `concept_runs` CAVs per concept on resampled balanced
/// sets, `random_cavs` random unit directions as the null, a Welch test per
/// (concept, class). Results are ordered by concept, then class.
pub fn run_tcav(
    model: &ProbeClassifier,
    concepts: &[ConceptPool],
    classes: &[ClassExamples],
    config: &TcavConfig,
) -> Result<Vec<TcavResult>, TcavError> {
    let layer = config
        .layer
        .clone()
        .unwrap_or_else(|| model.penultimate_layer().to_string());
    let l = layer_index(model, &layer)?;
    let width = model.network().layers()[l].outputs();

    let mut grads = Vec::with_capacity(classes.len());
    for c in classes {
        if c.inputs.rows() == 0 {
            return Err(TcavError::InsufficientExamples {
                what: format!("class {}", c.class),
                needed: 1,
                got: 0,
            });
        }
        grads.push(layer_gradients(model, &layer, c.class, &c.inputs)?);
    }
    let randoms = random_directions(width, config.random_cavs, &mut Rng::substream(config.seed, 0));
    let random_scores: Vec<Vec<f64>> = grads
        .iter()
        .map(|g| randoms.iter().map(|d| score::score_from_gradients(g, d)).collect())
        .collect::<Result<_, _>>()?;

    let mut results = Vec::new();
    for pool in concepts {
        let mut cavs = Vec::with_capacity(config.concept_runs);
        for run in 0..config.concept_runs {
            let mut rng = Rng::substream(config.seed, 1 + run as u64);
            let set = pool.resample(&mut rng);
            let cav_cfg = CavConfig {
                seed: config.seed.wrapping_add(run as u64),
                ..config.cav.clone()
            };
            cavs.push(train_cav(&set, model, &layer, &cav_cfg)?);
        }
        let accuracy = cavs.iter().map(|c| c.accuracy).sum::<f64>() / cavs.len().max(1) as f64;
        for ((c, g), rand) in classes.iter().zip(&grads).zip(&random_scores) {
            let concept_scores: Vec<f64> = cavs
                .iter()
                .map(|cav| score::score_from_gradients(g, &cav.direction))
                .collect::<Result<_, _>>()?;
            let sig = significance_test(&concept_scores, rand, config.alpha)?;
            results.push(TcavResult {
                concept: pool.concept.clone(),
                class: model.classes()[c.class].clone(),
                layer: layer.clone(),
                score: lower_median(&concept_scores),
                concept_scores,
                random_scores: rand.clone(),
                cav_accuracy: accuracy,
                p_value: sig.p_value,
                significant: sig.significant,
            });
        }
    }
    Ok(results)
}

/// `concept,class,layer,score,p_value,significant` rows.
pub fn results_csv(results: &[TcavResult]) -> Result<String, TcavError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| TcavError::Io(IoError::Serialize(e.to_string()));
    w.write_record(["concept", "class", "layer", "score", "p_value", "significant"])
        .map_err(err)?;
    for r in results {
        w.write_record([
            r.concept.as_str(),
            r.class.as_str(),
            r.layer.as_str(),
            &format!("{}", r.score),
            &format!("{:.6e}", r.p_value),
            if r.significant { "true" } else { "false" },
        ])
        .map_err(err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| TcavError::Io(IoError::Serialize(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConceptLabel {
    Pos,
    Neg,
}

/// One line of a concept file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptLine {
    pub concept: String,
    pub label: ConceptLabel,
    #[serde(default)]
    pub id: Option<String>,
    pub vector: Vec<f64>,
}

/// One line of a class-examples file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassLine {
    pub class: String,
    pub vector: Vec<f64>,
}

/// Groups concept lines into pools, ordered by concept name. Lines without an
/// id are named `line-N`.
pub fn concept_pools(lines: &[ConceptLine]) -> Vec<ConceptPool> {
    let mut map: BTreeMap<&str, ConceptPool> = BTreeMap::new();
    for (n, line) in lines.iter().enumerate() {
        let pool = map.entry(&line.concept).or_insert_with(|| ConceptPool {
            concept: line.concept.clone(),
            positives: Vec::new(),
            negatives: Vec::new(),
        });
        let ex = ConceptExample {
            id: line.id.clone().unwrap_or_else(|| format!("line-{}", n + 1)),
            vector: line.vector.clone(),
        };
        match line.label {
            ConceptLabel::Pos => pool.positives.push(ex),
            ConceptLabel::Neg => pool.negatives.push(ex),
        }
    }
    map.into_values().collect()
}

pub fn load_concept_pools(path: &Path) -> Result<Vec<ConceptPool>, TcavError> {
    Ok(concept_pools(&io::read_jsonl::<ConceptLine>(path)?))
}

/// Groups class lines by class name, in the model's class order.
pub fn class_examples(model: &ProbeClassifier, lines: &[ClassLine]) -> Result<Vec<ClassExamples>, TcavError> {
    let mut rows: Vec<Vec<&[f64]>> = vec![Vec::new(); model.classes().len()];
    for line in lines {
        let c = model
            .class_index(&line.class)
            .ok_or_else(|| TcavError::Config(format!("unknown class {}", line.class)))?;
        rows[c].push(&line.vector);
    }
    rows.into_iter()
        .enumerate()
        .filter(|(_, r)| !r.is_empty())
        .map(|(class, r)| {
            Ok(ClassExamples {
                class,
                inputs: Matrix::from_rows(&r)?,
            })
        })
        .collect()
}

pub fn load_class_examples(model: &ProbeClassifier, path: &Path) -> Result<Vec<ClassExamples>, TcavError> {
    class_examples(model, &io::read_jsonl::<ClassLine>(path)?)
}
