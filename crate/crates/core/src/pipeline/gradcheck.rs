use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::io::IoError;
use crate::nncore::{
    flatten_grads, gradient_check, softmax_cross_entropy, squared_error, Activation, GradCheckReport, Matrix, Mlp,
    NnError, Rng,
};
use crate::vae::{reparameterize_with, VaeError, VaeModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckCase {
    pub name: String,
    pub parameters: usize,
    pub max_relative_error: f64,
    pub analytic: f64,
    pub numeric: f64,
}

impl GradcheckCase {
    fn from_report(name: String, r: &GradCheckReport) -> Self {
        Self {
            name,
            parameters: r.checked,
            max_relative_error: r.max_relative_error,
            analytic: r.analytic,
            numeric: r.numeric,
        }
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_relative_error < tolerance
    }
}

fn normal_matrix(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    m.as_mut_slice().iter_mut().for_each(|v| *v = rng.standard_normal());
    m
}

/// Moves every parameter off the zero-bias initialization.
fn jittered(mut params: Vec<f64>, rng: &mut Rng) -> Vec<f64> {
    params.iter_mut().for_each(|p| *p += 0.1 * rng.standard_normal());
    params
}

/// Smallest ReLU pre-activation magnitude a case may have.
const KINK_MARGIN: f64 = 1e-3;
const MAX_DRAWS: usize = 100;

fn clear_of_kinks(activation: Activation, pre_activation: &Matrix) -> bool {
    activation != Activation::Relu || pre_activation.as_slice().iter().all(|z| z.abs() >= KINK_MARGIN)
}

/// A random network of 1 to 3 dense layers, each at most 64 units wide, under
/// softmax cross-entropy (squared error when it has a single output).
pub fn random_mlp_case(index: usize, seed: u64, epsilon: f64) -> Result<GradcheckCase, NnError> {
    let mut rng = Rng::substream(seed, index as u64);
    let depth = 1 + rng.below(3);
    let mut sizes = vec![1 + rng.below(16)];
    let mut acts = Vec::with_capacity(depth);
    for l in 0..depth {
        if l + 1 == depth {
            sizes.push(1 + rng.below(8));
            acts.push(Activation::Identity);
        } else {
            sizes.push(1 + rng.below(64));
            acts.push([Activation::Relu, Activation::Sigmoid, Activation::Identity][rng.below(3)]);
        }
    }
    let names: Vec<String> = (0..depth).map(|l| format!("layer{l}")).collect();
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let batch = 4;
    let outputs = *sizes.last().expect("at least one layer");
    let mut draw = || -> Result<(Mlp, Matrix, bool), NnError> {
        let mut net = Mlp::init(&sizes, &acts, &name_refs, &mut rng)?;
        net.set_flat_params(&jittered(net.flat_params(), &mut rng))?;
        let x = normal_matrix(batch, sizes[0], &mut rng);
        let (_, cache) = net.forward(&x)?;
        let clear = cache.layers.iter().zip(&acts).all(|(c, &a)| clear_of_kinks(a, &c.pre_activation));
        Ok((net, x, clear))
    };
    let (mut net, mut x, mut clear) = draw()?;
    for _ in 1..MAX_DRAWS {
        if clear {
            break;
        }
        (net, x, clear) = draw()?;
    }
    let labels: Vec<usize> = (0..batch).map(|_| rng.below(outputs)).collect();
    let target = normal_matrix(batch, outputs, &mut rng);
    let loss_and_grad = |net: &Mlp| -> Result<(f64, Matrix, crate::nncore::MlpCache), NnError> {
        let (out, cache) = net.forward(&x)?;
        let (loss, grad) = if outputs > 1 {
            softmax_cross_entropy(&out, &labels)?
        } else {
            squared_error(&out, &target)?
        };
        Ok((loss, grad, cache))
    };
    let (_, grad, cache) = loss_and_grad(&net)?;
    let (_, grads) = net.backward(&cache, &grad)?;
    let analytic = flatten_grads(&grads);
    let params = net.flat_params();
    let mut probe = net.clone();
    let report = gradient_check(&params, &analytic, epsilon, |p| {
        probe.set_flat_params(p).expect("same parameter count");
        loss_and_grad(&probe).map(|r| r.0).unwrap_or(f64::NAN)
    });
    let shape: Vec<String> = sizes.iter().map(usize::to_string).collect();
    Ok(GradcheckCase::from_report(format!("mlp{index:02}[{}]", shape.join("-")), &report))
}

/// Full β-VAE loss at D = 6, L = 2 with fixed reparameterization noise.
pub fn vae_case(seed: u64, beta: f64, epsilon: f64) -> Result<GradcheckCase, VaeError> {
    let mut rng = Rng::substream(seed, 1000);
    let batch = 5;
    let mut draw = || -> Result<(VaeModel, Matrix, Matrix, bool), VaeError> {
        let mut model = VaeModel::init(6, 8, 2, &mut rng);
        model.set_flat_params(&jittered(model.flat_params(), &mut rng))?;
        let mut x = Matrix::zeros(batch, 6);
        x.as_mut_slice()
            .iter_mut()
            .for_each(|v| *v = f64::from(u8::from(rng.bernoulli(0.4))));
        let eps = normal_matrix(batch, 2, &mut rng);
        let (mu, logvar) = model.encode_batch(&x)?;
        let z = reparameterize_with(&mu, &logvar, &eps)?;
        let enc = &model.encoder_hidden;
        let dec = &model.decoder_hidden;
        let clear = clear_of_kinks(enc.activation, &enc.pre_activation(&x)?)
            && clear_of_kinks(dec.activation, &dec.pre_activation(&z)?);
        Ok((model, x, eps, clear))
    };
    let (mut model, mut x, mut eps, mut clear) = draw()?;
    for _ in 1..MAX_DRAWS {
        if clear {
            break;
        }
        (model, x, eps, clear) = draw()?;
    }
    let analytic = flatten_grads(&model.gradients(&x, &eps, beta)?.layers);
    let params = model.flat_params();
    let mut probe = model.clone();
    let report = gradient_check(&params, &analytic, epsilon, |p| {
        probe.set_flat_params(p).expect("same parameter count");
        probe.loss_with_noise(&x, &eps, beta).map(|l| l.total).unwrap_or(f64::NAN)
    });
    Ok(GradcheckCase::from_report(format!("vae[D6-L2-beta{beta}]"), &report))
}

/// `networks` random MLPs followed by the VAE at β = 0.25 and β = 1.
pub fn gradcheck_suite(networks: usize, seed: u64, epsilon: f64) -> Result<Vec<GradcheckCase>, PipelineError> {
    let mut cases = Vec::with_capacity(networks + 2);
    for i in 0..networks {
        cases.push(random_mlp_case(i, seed, epsilon)?);
    }
    for beta in [0.25, 1.0] {
        cases.push(vae_case(seed, beta, epsilon)?);
    }
    Ok(cases)
}

/// `case,parameters,max_relative_error,analytic,numeric,passed` rows.
pub fn gradcheck_csv(cases: &[GradcheckCase], tolerance: f64) -> Result<String, PipelineError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| PipelineError::from(IoError::Serialize(e.to_string()));
    w.write_record(["case", "parameters", "max_relative_error", "analytic", "numeric", "passed"])
        .map_err(err)?;
    for c in cases {
        w.write_record([
            c.name.clone(),
            c.parameters.to_string(),
            format!("{:.3e}", c.max_relative_error),
            format!("{:.6e}", c.analytic),
            format!("{:.6e}", c.numeric),
            c.passes(tolerance).to_string(),
        ])
        .map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| IoError::Serialize(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes_at_default_tolerance() {
        let cases = gradcheck_suite(20, 0, 1e-5).unwrap();
        assert_eq!(cases.len(), 22);
        for c in &cases {
            assert!(c.passes(1e-4), "{c:?}");
        }
    }

    #[test]
    fn cases_are_reproducible() {
        assert_eq!(random_mlp_case(3, 9, 1e-5).unwrap(), random_mlp_case(3, 9, 1e-5).unwrap());
    }
}
