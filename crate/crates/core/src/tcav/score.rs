use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::nncore::{Matrix, Rng};

use super::{layer_index, ProbeClassifier, TcavError};

/// Gradients of logit `class` with respect to the activations of `layer`,
/// one row per input row.
pub fn layer_gradients(
    model: &ProbeClassifier,
    layer: &str,
    class: usize,
    inputs: &Matrix,
) -> Result<Matrix, TcavError> {
    let net = model.network();
    let l = layer_index(model, layer)?;
    check_class(model, class)?;
    let acts = net.infer_range(inputs, 0, l + 1)?;
    gradients_from_activations(model, l, class, &acts)
}

fn check_class(model: &ProbeClassifier, class: usize) -> Result<(), TcavError> {
    if class >= model.classes().len() {
        return Err(TcavError::Config(format!(
            "class index {class} but the model has {} classes",
            model.classes().len()
        )));
    }
    Ok(())
}

fn gradients_from_activations(
    model: &ProbeClassifier,
    l: usize,
    class: usize,
    acts: &Matrix,
) -> Result<Matrix, TcavError> {
    let layers = model.network().layers();
    let mut caches = Vec::with_capacity(layers.len() - l - 1);
    let mut current = acts.clone();
    for layer in &layers[l + 1..] {
        let (out, cache) = layer.forward(&current)?;
        caches.push(cache);
        current = out;
    }
    let mut grad = Matrix::zeros(acts.rows(), model.classes().len());
    for r in 0..acts.rows() {
        grad.set(r, class, 1.0);
    }
    for (layer, cache) in layers[l + 1..].iter().zip(&caches).rev() {
        grad = layer.backward(cache, &grad)?.input;
    }
    Ok(grad)
}

/// Logit `class` computed from an activation vector at `layer`.
pub fn logit_from_activation(
    model: &ProbeClassifier,
    layer: &str,
    class: usize,
    activation: &[f64],
) -> Result<f64, TcavError> {
    let l = layer_index(model, layer)?;
    check_class(model, class)?;
    let net = model.network();
    let a = Matrix::from_vec(1, activation.len(), activation.to_vec())?;
    let out = net.infer_range(&a, l + 1, net.layers().len())?;
    Ok(out.get(0, class))
}

/// `∇_a logit_class(a) · v` at the activation of `x` in `layer`.
pub fn directional_derivative(
    model: &ProbeClassifier,
    layer: &str,
    class: usize,
    x: &[f64],
    v: &[f64],
) -> Result<f64, TcavError> {
    let input = Matrix::from_vec(1, x.len(), x.to_vec())?;
    let grad = layer_gradients(model, layer, class, &input)?;
    if v.len() != grad.cols() {
        return Err(TcavError::Dimension {
            what: "direction",
            expected: grad.cols(),
            got: v.len(),
        });
    }
    Ok(grad.row(0).iter().zip(v).map(|(g, d)| g * d).sum())
}

/// Fraction of `examples` whose directional derivative along `direction` is
/// strictly positive.
pub fn tcav_score(
    model: &ProbeClassifier,
    layer: &str,
    class: usize,
    direction: &[f64],
    examples: &Matrix,
) -> Result<f64, TcavError> {
    if examples.rows() == 0 {
        return Err(TcavError::InsufficientExamples {
            what: "class examples".into(),
            needed: 1,
            got: 0,
        });
    }
    let grads = layer_gradients(model, layer, class, examples)?;
    score_from_gradients(&grads, direction)
}

pub(crate) fn score_from_gradients(grads: &Matrix, direction: &[f64]) -> Result<f64, TcavError> {
    if direction.len() != grads.cols() {
        return Err(TcavError::Dimension {
            what: "direction",
            expected: grads.cols(),
            got: direction.len(),
        });
    }
    let positive = grads
        .iter_rows()
        .filter(|g| g.iter().zip(direction).map(|(a, b)| a * b).sum::<f64>() > 0.0)
        .count();
    Ok(positive as f64 / grads.rows() as f64)
}

/// Unit vectors uniform on the sphere (normalized Gaussian draws).
pub fn random_directions(dim: usize, count: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| loop {
            let v: Vec<f64> = (0..dim).map(|_| rng.standard_normal()).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-12 {
                break v.into_iter().map(|x| x / norm).collect();
            }
        })
        .collect()
}

/// Minimum runs per group for the significance test.
pub const MIN_RUNS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Significance {
    pub t_statistic: f64,
    pub degrees_of_freedom: f64,
    pub p_value: f64,
    pub significant: bool,
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Two-sided Welch t-test of concept scores against random-direction scores.
/// Two zero-variance groups give p = 1 when their means agree and p = 0
/// otherwise.
pub fn significance_test(concept: &[f64], random: &[f64], alpha: f64) -> Result<Significance, TcavError> {
    for (what, xs) in [("concept runs", concept), ("random runs", random)] {
        if xs.len() < MIN_RUNS {
            return Err(TcavError::InsufficientExamples {
                what: what.into(),
                needed: MIN_RUNS,
                got: xs.len(),
            });
        }
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(TcavError::Config(format!("alpha {alpha} outside (0, 1)")));
    }
    let (m1, v1) = mean_var(concept);
    let (m2, v2) = mean_var(random);
    let (n1, n2) = (concept.len() as f64, random.len() as f64);
    let se2 = v1 / n1 + v2 / n2;
    let (t, df, p) = if se2 == 0.0 {
        let p = if m1 == m2 { 1.0 } else { 0.0 };
        let t = if m1 == m2 { 0.0 } else { (m1 - m2).signum() * f64::INFINITY };
        (t, n1 + n2 - 2.0, p)
    } else {
        let t = (m1 - m2) / se2.sqrt();
        let df = se2 * se2 / ((v1 / n1).powi(2) / (n1 - 1.0) + (v2 / n2).powi(2) / (n2 - 1.0));
        let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| TcavError::Config(e.to_string()))?;
        let p = (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0);
        (t, df, p)
    };
    Ok(Significance {
        t_statistic: t,
        degrees_of_freedom: df,
        p_value: p,
        significant: p < alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_groups_are_significant() {
        let concept = vec![1.0; 10];
        let mut rng = Rng::new(1);
        let random: Vec<f64> = (0..50).map(|_| 0.5 + 0.15 * rng.standard_normal()).collect();
        let s = significance_test(&concept, &random, 0.05).unwrap();
        assert!(s.significant && s.p_value < 0.01, "{s:?}");
    }

    #[test]
    fn constant_identical_groups_give_p_one() {
        let s = significance_test(&[0.5; 10], &[0.5; 12], 0.05).unwrap();
        assert_eq!(s.p_value, 1.0);
        assert!(!s.significant);
    }

    #[test]
    fn matches_reference_welch_value() {
        // reference: scipy.stats.ttest_ind(a, b, equal_var=False)
        let a = [0.1, 0.4, 0.3, 0.9, 0.5, 0.6, 0.2, 0.8, 0.7, 0.5];
        let b = [0.2, 0.1, 0.3, 0.2, 0.4, 0.1, 0.3, 0.2, 0.5, 0.1];
        let s = significance_test(&a, &b, 0.05).unwrap();
        assert!((s.t_statistic - 2.821_940_960_640_444).abs() < 1e-9, "{s:?}");
        assert!((s.p_value - 0.013_914_028_495_745).abs() < 1e-7, "{s:?}");
        assert!((s.degrees_of_freedom - 13.577_974_442_744_3).abs() < 1e-9);
    }

    #[test]
    fn calibrated_under_the_null() {
        let mut rng = Rng::new(9);
        let mut false_positives = 0;
        for _ in 0..200 {
            let draw = |rng: &mut Rng, n: usize| -> Vec<f64> { (0..n).map(|_| rng.uniform()).collect() };
            let c = draw(&mut rng, 10);
            let r = draw(&mut rng, 50);
            if significance_test(&c, &r, 0.05).unwrap().significant {
                false_positives += 1;
            }
        }
        let rate = false_positives as f64 / 200.0;
        assert!(rate <= 0.1, "{rate}");
    }

    #[test]
    fn too_few_runs_rejected() {
        assert!(significance_test(&[1.0; 9], &[0.5; 20], 0.05).is_err());
        assert!(significance_test(&[1.0; 10], &[0.5; 9], 0.05).is_err());
    }

    #[test]
    fn random_directions_are_unit() {
        let dirs = random_directions(7, 20, &mut Rng::new(2));
        for d in dirs {
            assert!((d.iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0).abs() < 1e-12);
        }
    }
}
