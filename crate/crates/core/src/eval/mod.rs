//! Q-error metrics, the scaled analytic-cost baseline and the
//! leave-one-database-out experiment harness.

mod baseline;
mod corpus;
mod experiment;
mod metrics;

pub use baseline::{fit_scaled_cost_baseline, ScaledCostFit};
pub use corpus::{
    encode_onehot_samples, encode_samples, execute_all, execute_query, prepare_database, workload_for, DatabaseArtifacts,
    ExecutedQuery,
};
pub use experiment::{
    prepare_corpus, run_experiment, run_index_experiment, run_index_on_corpus, run_on_corpus, BaselinePoint, BaselineSpec,
    Checks, DatabaseSpec, DirectionCheck, ExperimentReport, ExperimentSpec, FinetuneResult, FinetuneSpec, IndexModeResult,
    IndexReport, ModeResult, StagnationPoint, REFERENCE_INDEX_ROW, REPORT_FORMAT, SPEC_VERSION,
};
pub use metrics::{median, qerror, quantile, quantile_sorted, Metrics};

use rayon::prelude::*;

use crate::model::{CostModel, Sample};
use crate::Result;

/// Predicted costs as `exp(prediction)`, i.e. on the `1 + cost` scale.
pub fn predictions(model: &CostModel, samples: &[Sample]) -> Result<Vec<f64>> {
    samples.par_iter().map(|s| model.forward(&s.graph).map(|v| v.clamp(-700.0, 700.0).exp())).collect()
}

/// Q-errors of `model` on `samples`.
pub fn evaluate(model: &CostModel, samples: &[Sample]) -> Result<Metrics> {
    Metrics::from_qerrors(&qerrors(model, samples)?)
}

pub fn qerrors(model: &CostModel, samples: &[Sample]) -> Result<Vec<f64>> {
    predictions(model, samples)?.iter().zip(samples).map(|(p, s)| qerror(*p, s.cost + 1.0)).collect()
}

pub fn median_qerror_of(model: &CostModel, samples: &[Sample]) -> Result<f64> {
    Ok(evaluate(model, samples)?.median)
}
