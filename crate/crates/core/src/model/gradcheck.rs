//! Central finite-difference check of the hand-derived gradients.

use serde::{Deserialize, Serialize};

use super::{CostModel, PreparedGraph};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientCheck {
    pub parameters: usize,
    pub checked: usize,
    /// Parameters whose `±eps` perturbation flips a ReLU, where the loss is
    /// not differentiable inside the difference interval.
    pub skipped_kinks: usize,
    pub max_relative_error: f64,
    pub worst_parameter: Option<usize>,
}

/// Relative error with a floor of `1e-6` on the denominator so that two
/// vanishing gradients compare as equal.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Compares the analytic gradient of `(forward(graph) - label)^2` with
/// central differences for every parameter.
pub fn gradient_check(model: &CostModel, graph: &PreparedGraph, label: f64, eps: f64) -> Result<GradientCheck> {
    let (_, analytic) = model.loss_and_gradient(&[(graph, label)])?;
    let base = model.run(graph)?.activation_pattern(graph);
    let mut probe = model.clone();
    let mut report = GradientCheck {
        parameters: model.params.len(),
        checked: 0,
        skipped_kinks: 0,
        max_relative_error: 0.0,
        worst_parameter: None,
    };
    for (i, (&theta, &exact)) in model.params.iter().zip(&analytic).enumerate() {
        let mut side = |delta: f64| -> Result<(f64, bool)> {
            probe.params[i] = theta + delta;
            let tape = probe.run(graph)?;
            let same = tape.activation_pattern(graph) == base;
            Ok(((tape.output - label).powi(2), same))
        };
        let (plus, same_plus) = side(eps)?;
        let (minus, same_minus) = side(-eps)?;
        probe.params[i] = theta;
        if !(same_plus && same_minus) {
            report.skipped_kinks += 1;
            continue;
        }
        report.checked += 1;
        let numeric = (plus - minus) / (2.0 * eps);
        let err = relative_error(exact, numeric);
        if err > report.max_relative_error {
            report.max_relative_error = err;
            report.worst_parameter = Some(i);
        }
    }
    Ok(report)
}
