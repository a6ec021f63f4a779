//! Central finite-difference check of the analytic gradient.

use super::{ModelParams, TomError, TrainingSample};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Tensor name and element index of the worst entry.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

/// `|a - n| / max(|a|, |n|, 1e-8)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares every analytic gradient entry with `(L(θ+ε) - L(θ-ε)) / 2ε`.
pub fn grad_check(params: &ModelParams, sample: &TrainingSample, epsilon: f64) -> Result<GradCheckReport, TomError> {
    let (_, analytic) = params.loss_and_grad(sample)?;
    let mut probe = params.clone();
    let mut report = GradCheckReport { max_rel_error: 0.0, worst: None, checked: 0 };
    for spec in params.specs() {
        for (k, idx) in spec.range().enumerate() {
            let original = probe.data[idx];
            probe.data[idx] = original + epsilon;
            let plus = probe.sample_loss(sample)?;
            probe.data[idx] = original - epsilon;
            let minus = probe.sample_loss(sample)?;
            probe.data[idx] = original;
            let numeric = (plus - minus) / (2.0 * epsilon);
            let err = relative_error(analytic[idx], numeric);
            report.checked += 1;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((spec.name.clone(), k));
            }
        }
    }
    Ok(report)
}
