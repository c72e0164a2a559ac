use serde::{Deserialize, Serialize};

use super::{Activation, DenseCache, DenseGrads, DenseLayer, Matrix, NnError, Rng};

/// A chain of named dense layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    names: Vec<String>,
    layers: Vec<DenseLayer>,
}

/// Per-layer caches from [`Mlp::forward`], input side first.
#[derive(Debug, Clone)]
pub struct MlpCache {
    pub layers: Vec<DenseCache>,
}

impl Mlp {
    /// Layers are `(name, layer)` pairs; consecutive dimensions must agree.
    pub fn new(layers: Vec<(String, DenseLayer)>) -> Result<Self, NnError> {
        for pair in layers.windows(2) {
            if pair[0].1.outputs() != pair[1].1.inputs() {
                return Err(NnError::Shape {
                    op: "Mlp::new",
                    expected: (pair[0].1.outputs(), 0),
                    got: (pair[1].1.inputs(), 0),
                });
            }
        }
        let mut names = Vec::with_capacity(layers.len());
        let mut dense = Vec::with_capacity(layers.len());
        for (name, layer) in layers {
            if names.contains(&name) {
                return Err(NnError::DuplicateLayer(name));
            }
            names.push(name);
            dense.push(layer);
        }
        Ok(Self {
            names,
            layers: dense,
        })
    }

    /// Randomly initialised chain. `sizes` lists every width including input and
    /// output; `activations` has one entry per layer.
    pub fn init(
        sizes: &[usize],
        activations: &[Activation],
        names: &[&str],
        rng: &mut Rng,
    ) -> Result<Self, NnError> {
        let count = sizes.len().saturating_sub(1);
        if activations.len() != count || names.len() != count {
            return Err(NnError::Shape {
                op: "Mlp::init",
                expected: (count, count),
                got: (activations.len(), names.len()),
            });
        }
        let layers = (0..count)
            .map(|i| {
                (
                    names[i].to_string(),
                    DenseLayer::init(sizes[i], sizes[i + 1], activations[i], rng),
                )
            })
            .collect();
        Self::new(layers)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn layer_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, DenseLayer::inputs)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, DenseLayer::outputs)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::param_count).sum()
    }

    pub fn forward(&self, input: &Matrix) -> Result<(Matrix, MlpCache), NnError> {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut current = input.clone();
        for layer in &self.layers {
            let (out, cache) = layer.forward(&current)?;
            caches.push(cache);
            current = out;
        }
        Ok((current, MlpCache { layers: caches }))
    }

    pub fn infer(&self, input: &Matrix) -> Result<Matrix, NnError> {
        self.infer_range(input, 0, self.layers.len())
    }

    /// Runs layers `start..end` on `input`.
    pub fn infer_range(&self, input: &Matrix, start: usize, end: usize) -> Result<Matrix, NnError> {
        let mut current = input.clone();
        for layer in &self.layers[start..end] {
            current = layer.infer(&current)?;
        }
        Ok(current)
    }

    /// Backpropagates `grad_output` through every layer. Returns the input
    /// gradient and per-layer parameter gradients.
    pub fn backward(
        &self,
        cache: &MlpCache,
        grad_output: &Matrix,
    ) -> Result<(Matrix, Vec<DenseGrads>), NnError> {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut upstream = grad_output.clone();
        for (layer, c) in self.layers.iter().zip(&cache.layers).rev() {
            let g = layer.backward(c, &upstream)?;
            upstream = g.input.clone();
            grads.push(g);
        }
        grads.reverse();
        Ok((upstream, grads))
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            out.extend_from_slice(layer.weights.as_slice());
            out.extend_from_slice(&layer.bias);
        }
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<(), NnError> {
        if flat.len() != self.param_count() {
            return Err(NnError::ParamCount {
                expected: self.param_count(),
                got: flat.len(),
            });
        }
        let mut offset = 0;
        for layer in &mut self.layers {
            let w = layer.weights.as_mut_slice();
            w.copy_from_slice(&flat[offset..offset + w.len()]);
            offset += w.len();
            let n = layer.bias.len();
            layer.bias.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// Mutable parameter slices in the same order as [`Mlp::flat_params`].
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for layer in &mut self.layers {
            out.push(layer.weights.as_mut_slice());
            out.push(layer.bias.as_mut_slice());
        }
        out
    }
}

/// Flattens layer gradients in parameter order.
pub fn flatten_grads(grads: &[DenseGrads]) -> Vec<f64> {
    let mut out = Vec::new();
    for g in grads {
        out.extend_from_slice(g.weights.as_slice());
        out.extend_from_slice(&g.bias);
    }
    out
}

/// Gradient slices (weights, bias per layer) aligned with [`Mlp::param_slices_mut`].
pub fn grad_slices(grads: &[DenseGrads]) -> Vec<&[f64]> {
    let mut out = Vec::with_capacity(grads.len() * 2);
    for g in grads {
        out.push(g.weights.as_slice());
        out.push(g.bias.as_slice());
    }
    out
}

/// Half squared error summed over outputs, averaged over rows. Returns the loss
/// and its gradient with respect to `prediction`.
pub fn squared_error(prediction: &Matrix, target: &Matrix) -> Result<(f64, Matrix), NnError> {
    if prediction.shape() != target.shape() {
        return Err(NnError::Shape {
            op: "squared_error",
            expected: prediction.shape(),
            got: target.shape(),
        });
    }
    let batch = prediction.rows().max(1) as f64;
    let mut grad = Matrix::zeros(prediction.rows(), prediction.cols());
    let mut loss = 0.0;
    for ((g, &p), &t) in grad
        .as_mut_slice()
        .iter_mut()
        .zip(prediction.as_slice())
        .zip(target.as_slice())
    {
        let d = p - t;
        loss += 0.5 * d * d;
        *g = d / batch;
    }
    Ok((loss / batch, grad))
}

/// Row-wise softmax.
pub fn softmax(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Mean softmax cross-entropy against integer labels, with gradient w.r.t. logits.
pub fn softmax_cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix), NnError> {
    if labels.len() != logits.rows() {
        return Err(NnError::Shape {
            op: "softmax_cross_entropy",
            expected: (logits.rows(), 1),
            got: (labels.len(), 1),
        });
    }
    let batch = logits.rows().max(1) as f64;
    let mut probs = softmax(logits);
    let mut loss = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        if label >= logits.cols() {
            return Err(NnError::Label {
                label,
                classes: logits.cols(),
            });
        }
        let row = probs.row_mut(r);
        loss -= row[label].max(f64::MIN_POSITIVE).ln();
        row[label] -= 1.0;
        for v in row.iter_mut() {
            *v /= batch;
        }
    }
    Ok((loss / batch, probs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_params_round_trip() {
        let mut rng = Rng::new(5);
        let mut net = Mlp::init(
            &[3, 4, 2],
            &[Activation::Relu, Activation::Identity],
            &["h", "out"],
            &mut rng,
        )
        .unwrap();
        let mut flat = net.flat_params();
        assert_eq!(flat.len(), 3 * 4 + 4 + 4 * 2 + 2);
        flat[0] = 9.0;
        net.set_flat_params(&flat).unwrap();
        assert_eq!(net.flat_params(), flat);
        assert!(net.set_flat_params(&flat[1..]).is_err());
    }

    #[test]
    fn mismatched_chain_is_rejected() {
        let mut rng = Rng::new(5);
        let a = DenseLayer::init(3, 4, Activation::Relu, &mut rng);
        let b = DenseLayer::init(5, 2, Activation::Relu, &mut rng);
        assert!(Mlp::new(vec![("a".into(), a), ("b".into(), b)]).is_err());
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let logits = Matrix::from_rows(&[[1.0, 2.0, 3.0], [1000.0, 0.0, -1000.0]]).unwrap();
        let p = softmax(&logits);
        for row in p.iter_rows() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_is_pure() {
        let mut rng = Rng::new(11);
        let net = Mlp::init(
            &[4, 8, 3],
            &[Activation::Relu, Activation::Sigmoid],
            &["h", "out"],
            &mut rng,
        )
        .unwrap();
        let x = Matrix::from_rows(&[[0.3, -1.0, 2.0, 0.5]]).unwrap();
        let a = net.infer(&x).unwrap();
        let b = net.forward(&x).unwrap().0;
        assert_eq!(a, b);
    }
}
