/// Outcome of comparing analytic gradients with central differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Flat parameter index of the worst disagreement, if any parameter was checked.
    pub worst_index: Option<usize>,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_relative_error < tolerance
    }
}

pub const DEFAULT_EPSILON: f64 = 1e-5;

/// Relative error `|a − n| / max(|a|, |n|, 1e-6)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Checks every entry of `analytic` against `(f(θ + εeᵢ) − f(θ − εeᵢ)) / 2ε`.
pub fn gradient_check<F>(params: &[f64], analytic: &[f64], epsilon: f64, mut loss_at: F) -> GradCheckReport
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(params.len(), analytic.len(), "gradient length must match parameters");
    assert!(epsilon > 0.0, "epsilon must be positive");
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_index: None,
        analytic: 0.0,
        numeric: 0.0,
        checked: params.len(),
    };
    let mut probe = params.to_vec();
    for i in 0..params.len() {
        probe[i] = params[i] + epsilon;
        let plus = loss_at(&probe);
        probe[i] = params[i] - epsilon;
        let minus = loss_at(&probe);
        probe[i] = params[i];
        let numeric = (plus - minus) / (2.0 * epsilon);
        let err = relative_error(analytic[i], numeric);
        if report.worst_index.is_none() || err > report.max_relative_error {
            report.max_relative_error = err;
            report.worst_index = Some(i);
            report.analytic = analytic[i];
            report.numeric = numeric;
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_parameters_pass_vacuously() {
        let r = gradient_check(&[], &[], DEFAULT_EPSILON, |_| 0.0);
        assert_eq!(r.max_relative_error, 0.0);
        assert_eq!(r.worst_index, None);
    }

    #[test]
    fn quadratic_is_exact() {
        // f(θ) = Σ (i+1) θᵢ² + θ₀θ₁
        let f = |t: &[f64]| t.iter().enumerate().map(|(i, v)| (i + 1) as f64 * v * v).sum::<f64>() + t[0] * t[1];
        let theta = [0.3, -1.2, 2.0];
        let grad = [2.0 * 0.3 + -1.2, 4.0 * -1.2 + 0.3, 6.0 * 2.0];
        let r = gradient_check(&theta, &grad, DEFAULT_EPSILON, f);
        assert!(r.max_relative_error < 1e-8, "{r:?}");
    }

    #[test]
    fn wrong_gradient_is_flagged() {
        let r = gradient_check(&[1.0], &[3.0], DEFAULT_EPSILON, |t| t[0] * t[0]);
        assert!(r.max_relative_error > 0.3);
        assert_eq!(r.worst_index, Some(0));
    }
}
