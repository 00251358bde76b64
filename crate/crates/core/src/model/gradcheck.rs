//! Central-difference verification of the analytic gradient.

use super::lstm::{ChordClassifier, DropoutMasks, Tokens};

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub checked: usize,
    /// Tensor index and element offset of the worst entry.
    pub worst: (usize, usize),
}

/// Relative error with a floor on the denominator so that parameters with
/// a vanishing gradient are judged on absolute error.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-6);
    (analytic - numeric).abs() / denom
}

/// Compare every parameter's analytic gradient with `(L(θ+h) - L(θ-h)) / 2h`.
/// A fixed dropout mask keeps the loss deterministic.
pub fn gradient_check(
    model: &ChordClassifier,
    batch: &[Tokens],
    labels: &[usize],
    masks: Option<&DropoutMasks>,
    step: f64,
) -> GradCheckReport {
    let (_, grad) = model.loss_and_grad(batch, labels, masks);
    let analytic: Vec<Vec<f64>> = grad.slices().iter().map(|s| s.to_vec()).collect();
    let mut probe = model.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        checked: 0,
        worst: (0, 0),
    };
    for (ti, tensor) in analytic.iter().enumerate() {
        for (k, &a) in tensor.iter().enumerate() {
            let orig = probe.weights.slices()[ti][k];
            probe.weights.slices_mut()[ti][k] = orig + step;
            let up = probe.loss(batch, labels, masks);
            probe.weights.slices_mut()[ti][k] = orig - step;
            let down = probe.loss(batch, labels, masks);
            probe.weights.slices_mut()[ti][k] = orig;
            let numeric = (up - down) / (2.0 * step);
            let rel = relative_error(a, numeric);
            report.checked += 1;
            report.max_abs_error = report.max_abs_error.max((a - numeric).abs());
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = (ti, k);
            }
        }
    }
    report
}
