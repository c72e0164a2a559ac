use serde::{Deserialize, Serialize};

use super::{Matrix, NnError, Rng};

/// Lower/upper clamp applied to sigmoid outputs before they reach a logarithm.
pub const PROB_FLOOR: f64 = 1e-7;
pub const PROB_CEIL: f64 = 1.0 - 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// d(activation)/d(pre-activation), given both the pre-activation and output.
    fn derivative(self, pre: f64, out: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => out * (1.0 - out),
        }
    }

    fn init_gain(self) -> f64 {
        match self {
            Activation::Relu => std::f64::consts::SQRT_2,
            Activation::Identity | Activation::Sigmoid => 1.0,
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn clamp_probability(p: f64) -> f64 {
    p.clamp(PROB_FLOOR, PROB_CEIL)
}

/// Fully connected layer computing `activation(x · Wᵀ + b)`; weights are `out × in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

/// Values retained by [`DenseLayer::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct DenseCache {
    pub input: Matrix,
    pub pre_activation: Matrix,
    pub output: Matrix,
}

#[derive(Debug, Clone)]
pub struct DenseGrads {
    pub input: Matrix,
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn new(weights: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self, NnError> {
        if bias.len() != weights.rows() {
            return Err(NnError::Shape {
                op: "DenseLayer::new",
                expected: (weights.rows(), 1),
                got: (bias.len(), 1),
            });
        }
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    /// Kaiming-uniform weights with bound `gain · sqrt(3 / fan_in)`, zero bias.
    pub fn init(inputs: usize, outputs: usize, activation: Activation, rng: &mut Rng) -> Self {
        let bound = activation.init_gain() * (3.0 / inputs.max(1) as f64).sqrt();
        let data = (0..inputs * outputs)
            .map(|_| rng.uniform_range(-bound, bound))
            .collect();
        Self {
            weights: Matrix::from_vec(outputs, inputs, data).expect("sized buffer"),
            bias: vec![0.0; outputs],
            activation,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.rows()
    }

    pub fn param_count(&self) -> usize {
        self.weights.as_slice().len() + self.bias.len()
    }

    pub fn pre_activation(&self, input: &Matrix) -> Result<Matrix, NnError> {
        if input.cols() != self.inputs() {
            return Err(NnError::Shape {
                op: "forward_dense",
                expected: (input.rows(), self.inputs()),
                got: input.shape(),
            });
        }
        let mut pre = input.matmul_transposed(&self.weights)?;
        for r in 0..pre.rows() {
            for (v, b) in pre.row_mut(r).iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        Ok(pre)
    }

    pub fn forward(&self, input: &Matrix) -> Result<(Matrix, DenseCache), NnError> {
        let pre = self.pre_activation(input)?;
        let act = self.activation;
        let output = pre.map(|v| act.apply(v));
        let cache = DenseCache {
            input: input.clone(),
            pre_activation: pre,
            output: output.clone(),
        };
        Ok((output, cache))
    }

    /// Forward pass without retaining a cache.
    pub fn infer(&self, input: &Matrix) -> Result<Matrix, NnError> {
        let act = self.activation;
        Ok(self.pre_activation(input)?.map(|v| act.apply(v)))
    }

    pub fn backward(&self, cache: &DenseCache, grad_output: &Matrix) -> Result<DenseGrads, NnError> {
        if grad_output.shape() != cache.output.shape() {
            return Err(NnError::Shape {
                op: "backward_dense",
                expected: cache.output.shape(),
                got: grad_output.shape(),
            });
        }
        let mut grad_pre = grad_output.clone();
        let act = self.activation;
        for ((g, &pre), &out) in grad_pre
            .as_mut_slice()
            .iter_mut()
            .zip(cache.pre_activation.as_slice())
            .zip(cache.output.as_slice())
        {
            *g *= act.derivative(pre, out);
        }
        self.backward_from_pre_activation(cache, &grad_pre)
    }

    /// Backward pass when the caller already holds dL/d(pre-activation), as for
    /// losses fused with the output nonlinearity.
    pub fn backward_from_pre_activation(
        &self,
        cache: &DenseCache,
        grad_pre: &Matrix,
    ) -> Result<DenseGrads, NnError> {
        if grad_pre.shape() != cache.pre_activation.shape() {
            return Err(NnError::Shape {
                op: "backward_dense",
                expected: cache.pre_activation.shape(),
                got: grad_pre.shape(),
            });
        }
        Ok(DenseGrads {
            input: grad_pre.matmul(&self.weights)?,
            weights: grad_pre.transposed_matmul(&cache.input)?,
            bias: grad_pre.column_sums(),
        })
    }
}
