use serde::{Deserialize, Serialize};

use super::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let ok = self.learning_rate > 0.0
            && self.beta1 > 0.0
            && self.beta1 < 1.0
            && self.beta2 > 0.0
            && self.beta2 < 1.0
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(NnError::InvalidConfig(format!("{self:?}")))
        }
    }
}

/// Moment estimates for a fixed list of parameter slices.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl AdamState {
    /// `sizes` gives the length of every parameter slice the optimizer will update.
    pub fn new(config: AdamConfig, sizes: &[usize]) -> Result<Self, NnError> {
        config.validate()?;
        Ok(Self {
            config,
            step: 0,
            first_moment: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second_moment: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn second_moments(&self) -> &[Vec<f64>] {
        &self.second_moment
    }

    /// One bias-corrected Adam update. Gradients are checked for finiteness
    /// before anything is modified.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<(), NnError> {
        if params.len() != self.first_moment.len() || grads.len() != params.len() {
            return Err(NnError::ParamCount {
                expected: self.first_moment.len(),
                got: params.len().min(grads.len()),
            });
        }
        for (slot, ((p, g), m)) in params.iter().zip(grads).zip(&self.first_moment).enumerate() {
            if p.len() != g.len() || p.len() != m.len() {
                return Err(NnError::ParamCount {
                    expected: m.len(),
                    got: g.len(),
                });
            }
            if let Some(index) = g.iter().position(|v| !v.is_finite()) {
                return Err(NnError::NonFiniteGradient { slot, index });
            }
        }

        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step as i32;
        let correction1 = 1.0 - beta1.powi(t);
        let correction2 = 1.0 - beta2.powi(t);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                let m_hat = m[i] / correction1;
                let v_hat = v[i] / correction2;
                p[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut state = AdamState::new(AdamConfig::default(), &[3]).unwrap();
        let mut p = vec![1.0, -2.0, 0.5];
        let before = p.clone();
        state.step(&mut [&mut p], &[&[0.0, 0.0, 0.0]]).unwrap();
        assert_eq!(p, before);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m̂ = g, v̂ = g², so the step is lr·g/(|g|+ε) ≈ lr·sign(g)
        let lr = 3e-4;
        let mut state = AdamState::new(AdamConfig::with_learning_rate(lr), &[2]).unwrap();
        let mut p = vec![0.0, 0.0];
        state.step(&mut [&mut p], &[&[2.5, -0.01]]).unwrap();
        let expected0 = -lr * 2.5 / (2.5 + 1e-8);
        let expected1 = lr * 0.01 / (0.01 + 1e-8);
        assert!((p[0] - expected0).abs() < 1e-18);
        assert!((p[1] - expected1).abs() < 1e-18);
        assert!((p[0].abs() - lr).abs() < 1e-11);
    }

    #[test]
    fn identical_calls_identical_results() {
        let run = || {
            let mut state = AdamState::new(AdamConfig::default(), &[2]).unwrap();
            let mut p = vec![0.3, 0.7];
            for k in 0..5 {
                let g = [0.1 * k as f64, -0.2];
                state.step(&mut [&mut p], &[&g]).unwrap();
            }
            (p, state)
        };
        let (a, sa) = run();
        let (b, sb) = run();
        assert_eq!(a, b);
        assert_eq!(sa, sb);
        assert!(sa.second_moments()[0].iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn non_finite_gradient_aborts_without_mutation() {
        let mut state = AdamState::new(AdamConfig::default(), &[2]).unwrap();
        let mut p = vec![1.0, 1.0];
        let err = state.step(&mut [&mut p], &[&[0.1, f64::NAN]]).unwrap_err();
        assert!(matches!(err, NnError::NonFiniteGradient { slot: 0, index: 1 }));
        assert_eq!(p, vec![1.0, 1.0]);
        assert_eq!(state.step_count(), 0);
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = AdamConfig {
            beta1: 1.0,
            ..AdamConfig::default()
        };
        assert!(AdamState::new(cfg, &[1]).is_err());
    }
}
