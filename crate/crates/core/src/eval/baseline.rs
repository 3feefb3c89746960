//! Linear map from the planner's analytic cost to executed work units,
//! fitted on queries of the target database.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledCostFit {
    pub slope: f64,
    pub intercept: f64,
    /// Every analytic cost was identical; the fit is intercept-only.
    pub degenerate: bool,
    pub n: usize,
}

impl ScaledCostFit {
    pub fn predict(&self, analytic_cost: f64) -> f64 {
        self.slope * analytic_cost + self.intercept
    }
}

/// Ordinary least squares of `cost ≈ slope * analytic + intercept` over
/// `(analytic, cost)` pairs.
pub fn fit_scaled_cost_baseline(pairs: &[(f64, f64)]) -> Result<ScaledCostFit> {
    let n = pairs.len();
    if n < 2 {
        return Err(Error::Eval(format!("scaled-cost baseline needs at least 2 samples, got {n}")));
    }
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n as f64;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n as f64;
    let sxx: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= f64::EPSILON * mx.abs().max(1.0) * n as f64 {
        return Ok(ScaledCostFit { slope: 0.0, intercept: my, degenerate: true, n });
    }
    let slope = sxy / sxx;
    Ok(ScaledCostFit { slope, intercept: my - slope * mx, degenerate: false, n })
}
