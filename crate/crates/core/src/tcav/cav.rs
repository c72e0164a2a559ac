use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::nncore::{sigmoid, Matrix, Rng};

use super::{extract_activations, ProbeClassifier, TcavError};

/// Smallest number of examples per side for a CAV.
pub const MIN_CONCEPT_EXAMPLES: usize = 10;

/// Probe accuracy at or below which a CAV is flagged as carrying no signal.
pub const WEAK_CAV_ACCURACY: f64 = 0.6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptExample {
    pub id: String,
    pub vector: Vec<f64>,
}

/// Balanced positive and negative inputs for one concept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptExampleSet {
    pub concept: String,
    pub positives: Vec<ConceptExample>,
    pub negatives: Vec<ConceptExample>,
}

impl ConceptExampleSet {
    pub fn validate(&self) -> Result<(), TcavError> {
        let (p, n) = (self.positives.len(), self.negatives.len());
        if p.min(n) < MIN_CONCEPT_EXAMPLES {
            return Err(TcavError::InsufficientExamples {
                what: format!("concept {}", self.concept),
                needed: MIN_CONCEPT_EXAMPLES,
                got: p.min(n),
            });
        }
        if p.abs_diff(n) > 1 {
            return Err(TcavError::Unbalanced {
                concept: self.concept.clone(),
                positives: p,
                negatives: n,
            });
        }
        let pos_ids: HashSet<&str> = self.positives.iter().map(|e| e.id.as_str()).collect();
        if let Some(e) = self.negatives.iter().find(|e| pos_ids.contains(e.id.as_str())) {
            return Err(TcavError::Config(format!(
                "example {} is both positive and negative for {}",
                e.id, self.concept
            )));
        }
        let dim = self.positives[0].vector.len();
        if let Some(e) = self.positives.iter().chain(&self.negatives).find(|e| e.vector.len() != dim) {
            return Err(TcavError::Dimension {
                what: "concept example",
                expected: dim,
                got: e.vector.len(),
            });
        }
        Ok(())
    }

    pub fn positive_matrix(&self) -> Matrix {
        rows_matrix(&self.positives)
    }

    pub fn negative_matrix(&self) -> Matrix {
        rows_matrix(&self.negatives)
    }
}

fn rows_matrix(examples: &[ConceptExample]) -> Matrix {
    let rows: Vec<&[f64]> = examples.iter().map(|e| e.vector.as_slice()).collect();
    Matrix::from_rows(&rows).expect("validated example dimensions")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CavConfig {
    pub l2: f64,
    pub steps: usize,
    pub learning_rate: f64,
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for CavConfig {
    fn default() -> Self {
        Self {
            l2: 1e-3,
            steps: 500,
            learning_rate: 1.0,
            holdout_fraction: 0.2,
            seed: 0,
        }
    }
}

/// Unit concept direction in a layer's activation space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cav {
    pub concept: String,
    pub layer: String,
    pub direction: Vec<f64>,
    /// Accuracy of the linear probe on its held-out split.
    pub accuracy: f64,
    /// True when held-out accuracy shows no usable signal.
    pub weak: bool,
}

/// Trains a CAV from raw inputs, reading activations at `layer`.
pub fn train_cav(
    set: &ConceptExampleSet,
    model: &ProbeClassifier,
    layer: &str,
    config: &CavConfig,
) -> Result<Cav, TcavError> {
    set.validate()?;
    let pos = extract_activations(model, layer, &set.positive_matrix())?;
    let neg = extract_activations(model, layer, &set.negative_matrix())?;
    train_cav_on_activations(&set.concept, layer, &pos, &neg, config)
}

fn holdout_split(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    // keyed by side size so swapping the two sides reuses the same split
    Rng::substream(seed, n as u64).shuffle(&mut idx);
    let held = ((n as f64 * fraction).round() as usize).min(n.saturating_sub(1));
    let (test, train) = idx.split_at(held);
    (train.to_vec(), test.to_vec())
}

/// L2-regularized logistic regression (positives labelled 1) fitted by
/// full-batch gradient descent from zero, step `learning_rate / L`; the direction is the normalized weight vector.
pub fn train_cav_on_activations(
    concept: &str,
    layer: &str,
    positives: &Matrix,
    negatives: &Matrix,
    config: &CavConfig,
) -> Result<Cav, TcavError> {
    if positives.cols() != negatives.cols() {
        return Err(TcavError::Dimension {
            what: "negative activations",
            expected: positives.cols(),
            got: negatives.cols(),
        });
    }
    if positives.rows().min(negatives.rows()) < 2 {
        return Err(TcavError::InsufficientExamples {
            what: format!("concept {concept}"),
            needed: 2,
            got: positives.rows().min(negatives.rows()),
        });
    }
    let dim = positives.cols();
    let all = || positives.iter_rows().chain(negatives.iter_rows());
    let n_all = (positives.rows() + negatives.rows()) as f64;
    let mut mean = vec![0.0; dim];
    for row in all() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v / n_all;
        }
    }
    let variance: f64 = all()
        .map(|row| row.iter().zip(&mean).map(|(v, m)| (v - m).powi(2)).sum::<f64>())
        .sum::<f64>()
        / n_all;
    if variance < 1e-18 {
        return Err(TcavError::DegenerateConcept {
            concept: concept.to_string(),
            layer: layer.to_string(),
        });
    }

    let (pos_train, pos_test) = holdout_split(positives.rows(), config.holdout_fraction, config.seed);
    let (neg_train, neg_test) = holdout_split(negatives.rows(), config.holdout_fraction, config.seed);
    let train: Vec<(&[f64], f64)> = pos_train
        .iter()
        .map(|&i| (positives.row(i), 1.0))
        .chain(neg_train.iter().map(|&i| (negatives.row(i), 0.0)))
        .collect();

    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let n = train.len() as f64;
    // 1/L for the mean logistic loss, L = mean(|x|^2 + 1) / 4 + l2
    let lipschitz = train
        .iter()
        .map(|(x, _)| x.iter().map(|v| v * v).sum::<f64>() + 1.0)
        .sum::<f64>()
        / (4.0 * n)
        + config.l2;
    let step = config.learning_rate / lipschitz;
    for _ in 0..config.steps {
        let mut gw: Vec<f64> = w.iter().map(|wi| config.l2 * wi).collect();
        let mut gb = 0.0;
        for (x, y) in &train {
            let z: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + b;
            let err = (sigmoid(z) - y) / n;
            for (g, xi) in gw.iter_mut().zip(*x) {
                *g += err * xi;
            }
            gb += err;
        }
        for (wi, g) in w.iter_mut().zip(&gw) {
            *wi -= step * g;
        }
        b -= step * gb;
    }

    let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(TcavError::DegenerateConcept {
            concept: concept.to_string(),
            layer: layer.to_string(),
        });
    }
    let direction: Vec<f64> = w.iter().map(|v| v / norm).collect();

    let classify = |x: &[f64]| x.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>() + b > 0.0;
    let mut correct = pos_test.iter().filter(|&&i| classify(positives.row(i))).count();
    correct += neg_test.iter().filter(|&&i| !classify(negatives.row(i))).count();
    let tested = pos_test.len() + neg_test.len();
    let accuracy = if tested == 0 { 0.0 } else { correct as f64 / tested as f64 };
    let weak = accuracy <= WEAK_CAV_ACCURACY;
    if weak {
        log::warn!("concept {concept} at {layer}: CAV accuracy {accuracy:.2}, direction carries little signal");
    }
    Ok(Cav {
        concept: concept.to_string(),
        layer: layer.to_string(),
        direction,
        accuracy,
        weak,
    })
}
