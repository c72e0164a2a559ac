use serde::{Deserialize, Serialize};

use crate::nncore::{clamp_probability, Matrix, PROB_CEIL, PROB_FLOOR};

use super::VaeError;

/// Batch-averaged loss components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub bce: f64,
    pub kl: f64,
    pub total: f64,
}

/// β-VAE objective. BCE is summed over dimensions and KL over latent units;
/// both are averaged over the batch. `total = bce + β·kl`.
pub fn loss(x: &Matrix, p: &Matrix, mu: &Matrix, logvar: &Matrix, beta: f64) -> Result<LossParts, VaeError> {
    if x.shape() != p.shape() || mu.shape() != logvar.shape() || x.rows() != mu.rows() {
        return Err(VaeError::Dimension {
            what: "loss",
            expected: x.as_slice().len(),
            got: p.as_slice().len(),
        });
    }
    let batch = x.rows().max(1) as f64;
    let mut bce = 0.0;
    for (&xv, &pv) in x.as_slice().iter().zip(p.as_slice()) {
        let pc = clamp_probability(pv);
        bce -= xv * pc.ln() + (1.0 - xv) * (1.0 - pc).ln();
    }
    let kl = kl_divergence(mu.as_slice(), logvar.as_slice());
    let bce = bce / batch;
    let kl = kl / batch;
    Ok(LossParts {
        bce,
        kl,
        total: bce + beta * kl,
    })
}

/// [`loss`] computed from decoder logits, without forming `1 − p`. Logits are
/// clamped to the range that [`clamp_probability`] allows.
pub fn loss_from_logits(
    x: &Matrix,
    logits: &Matrix,
    mu: &Matrix,
    logvar: &Matrix,
    beta: f64,
) -> Result<LossParts, VaeError> {
    if x.shape() != logits.shape() || mu.shape() != logvar.shape() || x.rows() != mu.rows() {
        return Err(VaeError::Dimension {
            what: "loss",
            expected: x.as_slice().len(),
            got: logits.as_slice().len(),
        });
    }
    let lo = (PROB_FLOOR / (1.0 - PROB_FLOOR)).ln();
    let hi = (PROB_CEIL / (1.0 - PROB_CEIL)).ln();
    let batch = x.rows().max(1) as f64;
    let mut bce = 0.0;
    for (&xv, &a) in x.as_slice().iter().zip(logits.as_slice()) {
        let a = a.clamp(lo, hi);
        // −x·log σ(a) − (1−x)·log(1−σ(a)) = softplus(a) − x·a
        bce += a.max(0.0) + (-a.abs()).exp().ln_1p() - xv * a;
    }
    let kl = kl_divergence(mu.as_slice(), logvar.as_slice()) / batch;
    let bce = bce / batch;
    Ok(LossParts {
        bce,
        kl,
        total: bce + beta * kl,
    })
}

/// `−½ Σ (1 + log σ² − μ² − σ²)` summed over all entries.
pub fn kl_divergence(mu: &[f64], logvar: &[f64]) -> f64 {
    mu.iter()
        .zip(logvar)
        .map(|(&m, &lv)| -0.5 * (1.0 + lv - m * m - lv.exp()))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(v: &[f64]) -> Matrix {
        Matrix::from_vec(1, v.len(), v.to_vec()).unwrap()
    }

    #[test]
    fn logit_form_matches_probability_form() {
        let x = Matrix::from_vec(2, 3, vec![1.0, 0.0, 1.0, 0.0, 0.0, 1.0]).unwrap();
        let a = Matrix::from_vec(2, 3, vec![2.5, -1.0, 0.3, 4.0, -30.0, 30.0]).unwrap();
        let p = a.map(crate::nncore::sigmoid);
        let mu = Matrix::from_vec(2, 1, vec![0.2, -0.4]).unwrap();
        let lv = Matrix::from_vec(2, 1, vec![0.1, -0.3]).unwrap();
        let from_p = loss(&x, &p, &mu, &lv, 0.5).unwrap();
        let from_a = loss_from_logits(&x, &a, &mu, &lv, 0.5).unwrap();
        assert!((from_p.total - from_a.total).abs() < 1e-6, "{from_p:?} {from_a:?}");
        assert_eq!(from_p.kl, from_a.kl);
    }

    #[test]
    fn standard_normal_posterior_has_zero_kl() {
        assert_eq!(kl_divergence(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
    }

    #[test]
    fn unit_mean_shift_costs_half() {
        assert_eq!(kl_divergence(&[1.0], &[0.0]), 0.5);
    }

    #[test]
    fn perfect_reconstruction_and_plain_autoencoder_limit() {
        let x = row(&[1.0, 0.0, 1.0]);
        let parts = loss(&x, &x, &row(&[0.3]), &row(&[-0.2]), 0.0).unwrap();
        assert!(parts.bce < 1e-6, "{parts:?}");
        assert_eq!(parts.total, parts.bce);
    }

    #[test]
    fn batch_averaging() {
        let x = Matrix::from_rows(&[[1.0, 0.0], [1.0, 0.0]]).unwrap();
        let p = Matrix::from_rows(&[[0.5, 0.5], [0.5, 0.5]]).unwrap();
        let mu = Matrix::from_rows(&[[1.0], [1.0]]).unwrap();
        let lv = Matrix::zeros(2, 1);
        let parts = loss(&x, &p, &mu, &lv, 2.0).unwrap();
        assert!((parts.bce - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
        assert!((parts.kl - 0.5).abs() < 1e-12);
        assert!((parts.total - (parts.bce + 1.0)).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn kl_is_non_negative(mu in -5.0f64..5.0, lv in -8.0f64..4.0) {
            let kl = kl_divergence(&[mu], &[lv]);
            prop_assert!(kl >= -1e-15);
            if mu.abs() > 1e-3 || lv.abs() > 1e-3 {
                prop_assert!(kl > 0.0);
            }
        }
    }
}
