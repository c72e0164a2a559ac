use crate::nncore::{
    clamp_probability, Activation, Checkpoint, DenseGrads, DenseLayer, Matrix, NnError, Rng, PROB_CEIL,
    PROB_FLOOR,
};
use crate::taxonomy::AttributeVector;

use super::loss::{loss_from_logits, LossParts};
use super::VaeError;

const LAYER_NAMES: [&str; 5] = [
    "encoder.hidden",
    "encoder.mu",
    "encoder.logvar",
    "decoder.hidden",
    "decoder.output",
];

/// Encoder `D → H (relu) → {μ, log σ²} (L each)`, decoder `L → H (relu) → D (sigmoid)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VaeModel {
    pub encoder_hidden: DenseLayer,
    pub mu_head: DenseLayer,
    pub logvar_head: DenseLayer,
    pub decoder_hidden: DenseLayer,
    pub decoder_output: DenseLayer,
}

/// Loss parts and parameter gradients for one minibatch.
#[derive(Debug, Clone)]
pub struct VaeGradients {
    pub loss: LossParts,
    /// One entry per layer, in [`VaeModel::layers`] order.
    pub layers: Vec<DenseGrads>,
}

impl VaeModel {
    pub fn init(input_dim: usize, hidden_dim: usize, latent_dim: usize, rng: &mut Rng) -> Self {
        Self {
            encoder_hidden: DenseLayer::init(input_dim, hidden_dim, Activation::Relu, rng),
            mu_head: DenseLayer::init(hidden_dim, latent_dim, Activation::Identity, rng),
            logvar_head: DenseLayer::init(hidden_dim, latent_dim, Activation::Identity, rng),
            decoder_hidden: DenseLayer::init(latent_dim, hidden_dim, Activation::Relu, rng),
            decoder_output: DenseLayer::init(hidden_dim, input_dim, Activation::Sigmoid, rng),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.encoder_hidden.inputs()
    }

    pub fn hidden_dim(&self) -> usize {
        self.encoder_hidden.outputs()
    }

    pub fn latent_dim(&self) -> usize {
        self.mu_head.outputs()
    }

    pub fn layers(&self) -> [&DenseLayer; 5] {
        [
            &self.encoder_hidden,
            &self.mu_head,
            &self.logvar_head,
            &self.decoder_hidden,
            &self.decoder_output,
        ]
    }

    fn layers_mut(&mut self) -> [&mut DenseLayer; 5] {
        [
            &mut self.encoder_hidden,
            &mut self.mu_head,
            &mut self.logvar_head,
            &mut self.decoder_hidden,
            &mut self.decoder_output,
        ]
    }

    pub fn param_count(&self) -> usize {
        self.layers().iter().map(|l| l.param_count()).sum()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in self.layers() {
            out.extend_from_slice(l.weights.as_slice());
            out.extend_from_slice(&l.bias);
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
        for l in self.layers_mut() {
            let w = l.weights.as_mut_slice();
            w.copy_from_slice(&flat[offset..offset + w.len()]);
            offset += w.len();
            let n = l.bias.len();
            l.bias.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(10);
        for l in self.layers_mut() {
            out.push(l.weights.as_mut_slice());
            out.push(l.bias.as_mut_slice());
        }
        out
    }

    pub fn param_sizes(&self) -> Vec<usize> {
        self.layers()
            .iter()
            .flat_map(|l| [l.weights.as_slice().len(), l.bias.len()])
            .collect()
    }

    /// Posterior parameters `(μ, log σ²)` for a batch of rows.
    pub fn encode_batch(&self, x: &Matrix) -> Result<(Matrix, Matrix), VaeError> {
        self.check_input(x.cols())?;
        let h = self.encoder_hidden.infer(x)?;
        Ok((self.mu_head.infer(&h)?, self.logvar_head.infer(&h)?))
    }

    pub fn encode(&self, x: &AttributeVector) -> Result<(Vec<f64>, Vec<f64>), VaeError> {
        self.check_input(x.len())?;
        let (mu, logvar) = self.encode_batch(&Matrix::from_vec(1, x.len(), x.to_f64())?)?;
        Ok((mu.into_vec(), logvar.into_vec()))
    }

    /// Bernoulli probabilities per attribute, clamped into `[PROB_FLOOR, PROB_CEIL]`.
    pub fn decode_batch(&self, z: &Matrix) -> Result<Matrix, VaeError> {
        if z.cols() != self.latent_dim() {
            return Err(VaeError::Dimension {
                what: "latent",
                expected: self.latent_dim(),
                got: z.cols(),
            });
        }
        let h = self.decoder_hidden.infer(z)?;
        Ok(self.decoder_output.infer(&h)?.map(clamp_probability))
    }

    pub fn decode(&self, z: &[f64]) -> Result<Vec<f64>, VaeError> {
        if z.len() != self.latent_dim() {
            return Err(VaeError::Dimension {
                what: "latent",
                expected: self.latent_dim(),
                got: z.len(),
            });
        }
        Ok(self.decode_batch(&Matrix::from_vec(1, z.len(), z.to_vec())?)?.into_vec())
    }

    /// Decodes the posterior mean and thresholds at `threshold` (no sampling noise).
    pub fn reconstruct(&self, x: &AttributeVector, threshold: f64) -> Result<AttributeVector, VaeError> {
        let (mu, _) = self.encode(x)?;
        Ok(threshold_fixed(&self.decode(&mu)?, threshold))
    }

    /// Reconstruction through a posterior sample instead of the mean.
    pub fn reconstruct_sampled(
        &self,
        x: &AttributeVector,
        threshold: f64,
        rng: &mut Rng,
    ) -> Result<AttributeVector, VaeError> {
        let (mu, logvar) = self.encode(x)?;
        let z = reparameterize(&mu, &logvar, rng)?;
        Ok(threshold_fixed(&self.decode(&z)?, threshold))
    }

    /// Posterior-mean reconstruction probabilities for a batch.
    pub fn reconstruct_probabilities(&self, x: &Matrix) -> Result<Matrix, VaeError> {
        let (mu, _) = self.encode_batch(x)?;
        self.decode_batch(&mu)
    }

    /// Loss for a batch with the reparameterization noise `eps` held fixed.
    pub fn loss_with_noise(&self, x: &Matrix, eps: &Matrix, beta: f64) -> Result<LossParts, VaeError> {
        let (mu, logvar) = self.encode_batch(x)?;
        let z = reparameterize_with(&mu, &logvar, eps)?;
        let logits = self.decoder_output.pre_activation(&self.decoder_hidden.infer(&z)?)?;
        loss_from_logits(x, &logits, &mu, &logvar, beta)
    }

    /// Forward and analytic backward pass for a batch with fixed noise `eps`.
    pub fn gradients(&self, x: &Matrix, eps: &Matrix, beta: f64) -> Result<VaeGradients, VaeError> {
        self.check_input(x.cols())?;
        let batch = x.rows().max(1) as f64;

        let (h1, enc_cache) = self.encoder_hidden.forward(x)?;
        let (mu, mu_cache) = self.mu_head.forward(&h1)?;
        let (logvar, lv_cache) = self.logvar_head.forward(&h1)?;
        let z = reparameterize_with(&mu, &logvar, eps)?;
        let (h2, dec_cache) = self.decoder_hidden.forward(&z)?;
        let (p_raw, out_cache) = self.decoder_output.forward(&h2)?;
        let parts = loss_from_logits(x, &out_cache.pre_activation, &mu, &logvar, beta)?;

        // BCE through the clamped sigmoid: d/da = p − x inside the clamp, 0 outside
        let mut grad_logits = Matrix::zeros(x.rows(), x.cols());
        for ((g, &pr), &xv) in grad_logits
            .as_mut_slice()
            .iter_mut()
            .zip(p_raw.as_slice())
            .zip(x.as_slice())
        {
            *g = if pr > PROB_FLOOR && pr < PROB_CEIL {
                (pr - xv) / batch
            } else {
                0.0
            };
        }
        let g_out = self.decoder_output.backward_from_pre_activation(&out_cache, &grad_logits)?;
        let g_dec = self.decoder_hidden.backward(&dec_cache, &g_out.input)?;
        let grad_z = &g_dec.input;

        let mut grad_mu = Matrix::zeros(mu.rows(), mu.cols());
        let mut grad_logvar = Matrix::zeros(mu.rows(), mu.cols());
        for i in 0..mu.as_slice().len() {
            let m = mu.as_slice()[i];
            let lv = logvar.as_slice()[i];
            let gz = grad_z.as_slice()[i];
            let e = eps.as_slice()[i];
            grad_mu.as_mut_slice()[i] = gz + beta * m / batch;
            grad_logvar.as_mut_slice()[i] = gz * e * 0.5 * (0.5 * lv).exp() + beta * 0.5 * (lv.exp() - 1.0) / batch;
        }
        let g_mu = self.mu_head.backward(&mu_cache, &grad_mu)?;
        let g_lv = self.logvar_head.backward(&lv_cache, &grad_logvar)?;
        let mut grad_h1 = g_mu.input.clone();
        for (a, b) in grad_h1.as_mut_slice().iter_mut().zip(g_lv.input.as_slice()) {
            *a += b;
        }
        let g_enc = self.encoder_hidden.backward(&enc_cache, &grad_h1)?;
        Ok(VaeGradients {
            loss: parts,
            layers: vec![g_enc, g_mu, g_lv, g_dec, g_out],
        })
    }

    pub fn to_checkpoint(&self, seed: u64) -> Checkpoint {
        let mut ck = Checkpoint::new(seed);
        for (name, layer) in LAYER_NAMES.iter().zip(self.layers()) {
            ck.push_layer(name, layer);
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, VaeError> {
        let model = Self {
            encoder_hidden: ck.layer(LAYER_NAMES[0])?,
            mu_head: ck.layer(LAYER_NAMES[1])?,
            logvar_head: ck.layer(LAYER_NAMES[2])?,
            decoder_hidden: ck.layer(LAYER_NAMES[3])?,
            decoder_output: ck.layer(LAYER_NAMES[4])?,
        };
        let (d, h, l) = (model.input_dim(), model.hidden_dim(), model.latent_dim());
        let consistent = model.mu_head.inputs() == h
            && model.logvar_head.inputs() == h
            && model.logvar_head.outputs() == l
            && model.decoder_hidden.inputs() == l
            && model.decoder_output.inputs() == model.decoder_hidden.outputs()
            && model.decoder_output.outputs() == d;
        if !consistent {
            return Err(VaeError::Checkpoint("layer shapes do not form a VAE".into()));
        }
        Ok(model)
    }

    fn check_input(&self, got: usize) -> Result<(), VaeError> {
        if got != self.input_dim() {
            return Err(VaeError::Dimension {
                what: "input",
                expected: self.input_dim(),
                got,
            });
        }
        Ok(())
    }
}

/// `z = μ + exp(log σ² / 2) ⊙ ε` for a given noise matrix.
pub fn reparameterize_with(mu: &Matrix, logvar: &Matrix, eps: &Matrix) -> Result<Matrix, VaeError> {
    if mu.shape() != logvar.shape() || mu.shape() != eps.shape() {
        return Err(VaeError::Dimension {
            what: "reparameterization",
            expected: mu.as_slice().len(),
            got: eps.as_slice().len().min(logvar.as_slice().len()),
        });
    }
    let mut z = mu.clone();
    for ((zv, &lv), &e) in z
        .as_mut_slice()
        .iter_mut()
        .zip(logvar.as_slice())
        .zip(eps.as_slice())
    {
        *zv += (0.5 * lv).exp() * e;
    }
    Ok(z)
}

/// Draws `z ~ N(μ, diag(exp(log σ²)))`.
pub fn reparameterize(mu: &[f64], logvar: &[f64], rng: &mut Rng) -> Result<Vec<f64>, VaeError> {
    if mu.len() != logvar.len() {
        return Err(VaeError::Dimension {
            what: "reparameterization",
            expected: mu.len(),
            got: logvar.len(),
        });
    }
    Ok(mu
        .iter()
        .zip(logvar)
        .map(|(&m, &lv)| m + (0.5 * lv).exp() * rng.standard_normal())
        .collect())
}

/// `bit_i = p_i > threshold`.
pub fn threshold_fixed(p: &[f64], threshold: f64) -> AttributeVector {
    AttributeVector::from_bits(p.iter().map(|&v| v > threshold).collect())
}
