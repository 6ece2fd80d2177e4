//! Central finite-difference check of the analytic gradients.

use super::network::DropoutMasks;
use super::params::ModelParams;
use super::ModelError;

/// Denominator floor for the relative error, so that pairs of gradients
/// that are both numerically zero compare as equal.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR);
    (analytic - numeric).abs() / scale
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_relative_error: f64,
    /// Flat index and tensor name of the worst entry.
    pub worst_index: usize,
    pub worst_tensor: String,
    pub analytic: f64,
    pub numeric: f64,
}

fn objective(
    params: &ModelParams,
    input: &[usize],
    target: usize,
    masks: &DropoutMasks,
) -> Result<f64, ModelError> {
    let pass = params.forward_with_masks(input, masks)?;
    Ok(pass.cross_entropy(target) + params.weight_penalty())
}

/// Compares every analytic gradient entry against `(L(θ+ε) - L(θ-ε)) / 2ε`
/// with the dropout masks held fixed.
pub fn gradient_check(
    params: &ModelParams,
    input: &[usize],
    target: usize,
    masks: &DropoutMasks,
    epsilon: f64,
) -> Result<GradCheckReport, ModelError> {
    let pass = params.forward_with_masks(input, masks)?;
    let analytic = params.backward(&pass, target)?;
    let mut probe = params.clone();
    let mut report = GradCheckReport {
        checked: 0,
        max_relative_error: 0.0,
        worst_index: 0,
        worst_tensor: String::new(),
        analytic: 0.0,
        numeric: 0.0,
    };
    for i in 0..params.len() {
        let original = params.values()[i];
        probe.values_mut()[i] = original + epsilon;
        let plus = objective(&probe, input, target, masks)?;
        probe.values_mut()[i] = original - epsilon;
        let minus = objective(&probe, input, target, masks)?;
        probe.values_mut()[i] = original;
        let numeric = (plus - minus) / (2.0 * epsilon);
        let err = relative_error(analytic.values[i], numeric);
        report.checked += 1;
        if err > report.max_relative_error || i == 0 {
            report.max_relative_error = err;
            report.worst_index = i;
            report.analytic = analytic.values[i];
            report.numeric = numeric;
        }
    }
    report.worst_tensor = params
        .layout()
        .locate(report.worst_index)
        .map(|t| t.name.clone())
        .unwrap_or_default();
    Ok(report)
}
