use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::io;
use crate::nncore::{
    grad_slices, softmax_cross_entropy, Activation, AdamConfig, AdamState, Checkpoint, Matrix, Mlp, Rng,
};

use super::TcavError;

const PROBE_FORMAT: &str = "probe-classifier";

/// Dense classifier under analysis. Hidden layers are named `hidden1`,
/// `hidden2`, ...; the output layer is `logits`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeClassifier {
    network: Mlp,
    classes: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct ProbeFile {
    format: String,
    version: u32,
    classes: Vec<String>,
    network: Checkpoint,
}

impl ProbeClassifier {
    pub fn new(network: Mlp, classes: Vec<String>) -> Result<Self, TcavError> {
        if network.layers().len() < 2 {
            return Err(TcavError::Config("probe needs at least one internal layer".into()));
        }
        if network.output_dim() != classes.len() || classes.len() < 2 {
            return Err(TcavError::Config(format!(
                "{} outputs for {} class names",
                network.output_dim(),
                classes.len()
            )));
        }
        Ok(Self { network, classes })
    }

    pub fn network(&self) -> &Mlp {
        &self.network
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == name)
    }

    pub fn layer_names(&self) -> &[String] {
        self.network.names()
    }

    /// Name of the last internal layer.
    pub fn penultimate_layer(&self) -> &str {
        let names = self.network.names();
        &names[names.len() - 2]
    }

    pub fn input_dim(&self) -> usize {
        self.network.input_dim()
    }

    pub fn logits(&self, inputs: &Matrix) -> Result<Matrix, TcavError> {
        Ok(self.network.infer(inputs)?)
    }

    pub fn predict(&self, inputs: &Matrix) -> Result<Vec<usize>, TcavError> {
        let logits = self.logits(inputs)?;
        Ok(logits
            .iter_rows()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                    .0
            })
            .collect())
    }

    pub fn accuracy(&self, inputs: &Matrix, labels: &[usize]) -> Result<f64, TcavError> {
        if labels.is_empty() {
            return Ok(0.0);
        }
        let pred = self.predict(inputs)?;
        let hits = pred.iter().zip(labels).filter(|(p, l)| p == l).count();
        Ok(hits as f64 / labels.len() as f64)
    }

    pub fn to_json(&self, seed: u64) -> Result<String, TcavError> {
        let file = ProbeFile {
            format: PROBE_FORMAT.to_string(),
            version: 1,
            classes: self.classes.clone(),
            network: Checkpoint::from_mlp(&self.network, seed),
        };
        serde_json::to_string_pretty(&file)
            .map(|s| s + "\n")
            .map_err(|e| TcavError::Model(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, TcavError> {
        let file: ProbeFile = serde_json::from_str(text).map_err(|e| TcavError::Model(e.to_string()))?;
        if file.format != PROBE_FORMAT || file.version != 1 {
            return Err(TcavError::Model(format!(
                "unsupported probe file {} v{}",
                file.format, file.version
            )));
        }
        Self::new(file.network.to_mlp()?, file.classes)
    }

    pub fn save(&self, path: &Path, seed: u64) -> Result<(), TcavError> {
        Ok(io::write_atomic(path, self.to_json(seed)?.as_bytes())?)
    }

    pub fn load(path: &Path) -> Result<Self, TcavError> {
        Self::from_json(&io::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub validation_fraction: f64,
    pub min_per_class: usize,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            hidden: vec![32, 16],
            epochs: 60,
            batch_size: 32,
            learning_rate: 3e-3,
            validation_fraction: 0.2,
            min_per_class: 50,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub train_accuracy: f64,
    pub validation_accuracy: f64,
    pub final_loss: f64,
}

/// Softmax cross-entropy training with Adam. The validation split is drawn
/// per class so every class is represented on both sides.
pub fn train_probe_classifier(
    inputs: &Matrix,
    labels: &[usize],
    classes: &[String],
    config: &ProbeConfig,
) -> Result<(ProbeClassifier, ProbeReport), TcavError> {
    if inputs.rows() != labels.len() {
        return Err(TcavError::Dimension {
            what: "labels",
            expected: inputs.rows(),
            got: labels.len(),
        });
    }
    let k = classes.len();
    let mut counts = vec![0usize; k];
    for &l in labels {
        if l >= k {
            return Err(TcavError::Config(format!("label {l} but only {k} classes")));
        }
        counts[l] += 1;
    }
    let present = counts.iter().filter(|&&c| c > 0).count();
    if present < 2 {
        return Err(TcavError::SingleClass);
    }
    if let Some((c, &n)) = counts.iter().enumerate().find(|(_, &n)| n < config.min_per_class) {
        return Err(TcavError::InsufficientExamples {
            what: format!("class {}", classes[c]),
            needed: config.min_per_class,
            got: n,
        });
    }
    if config.batch_size == 0 || config.epochs == 0 || config.hidden.is_empty() {
        return Err(TcavError::Config("probe needs epochs, batch size and a hidden layer".into()));
    }

    let mut rng = Rng::substream(config.seed, 0);
    let mut train_idx = Vec::new();
    let mut val_idx = Vec::new();
    for c in 0..k {
        let mut rows: Vec<usize> = (0..labels.len()).filter(|&r| labels[r] == c).collect();
        rng.shuffle(&mut rows);
        let n_val = (rows.len() as f64 * config.validation_fraction).round() as usize;
        val_idx.extend_from_slice(&rows[..n_val]);
        train_idx.extend_from_slice(&rows[n_val..]);
    }
    val_idx.sort_unstable();

    let mut sizes = vec![inputs.cols()];
    sizes.extend(&config.hidden);
    sizes.push(k);
    let mut acts = vec![Activation::Relu; config.hidden.len()];
    acts.push(Activation::Identity);
    let names: Vec<String> = (1..=config.hidden.len())
        .map(|i| format!("hidden{i}"))
        .chain(std::iter::once("logits".to_string()))
        .collect();
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let mut net = Mlp::init(&sizes, &acts, &name_refs, &mut rng)?;
    let sizes: Vec<usize> = net.param_slices_mut().iter().map(|s| s.len()).collect();
    let mut adam = AdamState::new(AdamConfig::with_learning_rate(config.learning_rate), &sizes)?;

    let mut final_loss = f64::NAN;
    for _ in 0..config.epochs {
        rng.shuffle(&mut train_idx);
        let mut total = 0.0;
        for chunk in train_idx.chunks(config.batch_size) {
            let x = inputs.select_rows(chunk);
            let y: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let (logits, cache) = net.forward(&x)?;
            let (loss, grad) = softmax_cross_entropy(&logits, &y)?;
            let b = chunk.len() as f64;
            let (_, grads) = net.backward(&cache, &grad)?;
            adam.step(&mut net.param_slices_mut(), &grad_slices(&grads))?;
            total += loss * b;
        }
        final_loss = total / train_idx.len() as f64;
    }
    train_idx.sort_unstable();
    let model = ProbeClassifier::new(net, classes.to_vec())?;
    let acc = |rows: &[usize]| -> Result<f64, TcavError> {
        let y: Vec<usize> = rows.iter().map(|&i| labels[i]).collect();
        model.accuracy(&inputs.select_rows(rows), &y)
    };
    let report = ProbeReport {
        train_accuracy: acc(&train_idx)?,
        validation_accuracy: acc(&val_idx)?,
        final_loss,
    };
    log::info!(
        "probe classifier: train accuracy {:.3}, validation accuracy {:.3}",
        report.train_accuracy,
        report.validation_accuracy
    );
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_blobs(n: usize, seed: u64, shuffle_labels: bool) -> (Matrix, Vec<usize>) {
        let mut rng = Rng::new(seed);
        let mut x = Matrix::zeros(2 * n, 4);
        let mut y = Vec::new();
        for r in 0..2 * n {
            let c = r % 2;
            let centre = if c == 0 { -1.5 } else { 1.5 };
            for j in 0..4 {
                x.set(r, j, centre * f64::from(u8::from(j < 2)) + 0.5 * rng.standard_normal());
            }
            y.push(c);
        }
        if shuffle_labels {
            rng.shuffle(&mut y);
        }
        (x, y)
    }

    fn names() -> Vec<String> {
        vec!["a".into(), "b".into()]
    }

    #[test]
    fn separable_data_is_learned() {
        let (x, y) = two_blobs(100, 1, false);
        let (model, report) = train_probe_classifier(&x, &y, &names(), &ProbeConfig::default()).unwrap();
        assert!(report.validation_accuracy >= 0.95, "{report:?}");
        assert_eq!(model.layer_names(), ["hidden1", "hidden2", "logits"]);
        assert_eq!(model.penultimate_layer(), "hidden2");
    }

    #[test]
    fn shuffled_labels_stay_near_chance() {
        let (x, y) = two_blobs(150, 2, true);
        let (_, report) = train_probe_classifier(&x, &y, &names(), &ProbeConfig::default()).unwrap();
        assert!((report.validation_accuracy - 0.5).abs() <= 0.1, "{report:?}");
    }

    #[test]
    fn same_seed_same_model_and_json_round_trip() {
        let (x, y) = two_blobs(60, 3, false);
        let cfg = ProbeConfig {
            epochs: 5,
            ..ProbeConfig::default()
        };
        let (a, _) = train_probe_classifier(&x, &y, &names(), &cfg).unwrap();
        let (b, _) = train_probe_classifier(&x, &y, &names(), &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ProbeClassifier::from_json(&a.to_json(0).unwrap()).unwrap(), a);
    }

    #[test]
    fn single_class_and_small_classes_rejected() {
        let (x, _) = two_blobs(60, 4, false);
        let y = vec![0; 120];
        assert!(matches!(
            train_probe_classifier(&x, &y, &names(), &ProbeConfig::default()),
            Err(TcavError::SingleClass)
        ));
        let (x, y) = two_blobs(20, 4, false);
        assert!(matches!(
            train_probe_classifier(&x, &y, &names(), &ProbeConfig::default()),
            Err(TcavError::InsufficientExamples { .. })
        ));
    }
}
