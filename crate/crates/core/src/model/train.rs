//! Mini-batch Adam on squared error of log costs, with early stopping on
//! the validation median Q-error.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{CostModel, ModelConfig, PreparedGraph};
use crate::encoding::QueryGraph;
use crate::eval::{median, qerror};
use crate::{rng, Error, Result};

/// Samples per gradient work unit. Partial sums are added in chunk order,
/// so results do not depend on the number of threads.
const CHUNK: usize = 16;
const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPSILON: f64 = 1e-8;
/// Fine-tuning runs at a tenth of the learning rate for at most this many epochs.
pub const FINETUNE_MAX_EPOCHS: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub graph: PreparedGraph,
    /// `ln(1 + cost)`.
    pub label: f64,
    pub cost: f64,
    pub database: String,
    pub query_id: u64,
}

impl Sample {
    pub fn new(graph: &QueryGraph, cost: f64, database: &str, query_id: u64) -> Result<Sample> {
        if !(cost.is_finite() && cost >= 0.0) {
            return Err(Error::Model(format!("cost of {database}/{query_id} is not a finite non-negative number")));
        }
        Ok(Sample { graph: PreparedGraph::new(graph)?, label: cost.ln_1p(), cost, database: database.to_string(), query_id })
    }

    fn name(&self) -> String {
        format!("{}/{}", self.database, self.query_id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_median_q: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept (validation runs only).
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Adam {
        Adam { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = BETA1 * self.m[i] + (1.0 - BETA1) * g;
            self.v[i] = BETA2 * self.v[i] + (1.0 - BETA2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= lr * mh / (vh.sqrt() + EPSILON);
        }
    }
}

fn check_samples(model: &CostModel, samples: &[Sample]) -> Result<()> {
    for s in samples {
        model.check_schema(&s.graph.schema)?;
    }
    Ok(())
}

/// Median Q-error of `model` on `samples`, comparing `exp(prediction)`
/// with `1 + cost`.
pub fn median_qerror(model: &CostModel, samples: &[Sample]) -> Result<f64> {
    let qs = samples
        .par_iter()
        .map(|s| qerror(model.forward(&s.graph)?.exp(), s.cost + 1.0))
        .collect::<Result<Vec<f64>>>()?;
    Ok(median(&qs))
}

fn batch_gradient(model: &CostModel, samples: &[Sample], batch: &[usize]) -> Result<(f64, Vec<f64>)> {
    let n = model.params.len();
    let parts = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut g = vec![0.0; n];
            let items = chunk.iter().map(|&i| (&samples[i].graph, samples[i].label, samples[i].name()));
            let loss = model.sum_loss_gradient(items, &mut g)?;
            Ok((loss, g))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut grad = vec![0.0; n];
    let mut loss = 0.0;
    for (l, g) in parts {
        loss += l;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    let scale = 1.0 / batch.len() as f64;
    grad.iter_mut().for_each(|g| *g *= scale);
    Ok((loss * scale, grad))
}

/// Continues optimizing `model` in place. With a validation set, stops
/// after `patience` epochs without improvement of the validation median
/// Q-error and restores the best parameters.
pub fn fit(
    model: &mut CostModel,
    train: &[Sample],
    validation: &[Sample],
    epochs: usize,
    learning_rate: f64,
    stream: &str,
) -> Result<History> {
    if train.is_empty() {
        return Err(Error::Model("empty training set".into()));
    }
    check_samples(model, train)?;
    check_samples(model, validation)?;
    let cfg = model.config.clone();
    let mut shuffle = rng::derive_rng(cfg.seed, stream);
    let mut adam = Adam::new(model.params.len());
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = History::default();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut stale = 0;

    for epoch in 1..=epochs {
        order.shuffle(&mut shuffle);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let (loss, grad) = batch_gradient(model, train, batch)?;
            total += loss * batch.len() as f64;
            adam.step(&mut model.params, &grad, learning_rate);
        }
        let train_loss = total / train.len() as f64;
        let validation_median_q = if validation.is_empty() { None } else { Some(median_qerror(model, validation)?) };
        log::debug!("epoch {epoch}: train loss {train_loss:.5}, validation median q {validation_median_q:?}");
        history.epochs.push(EpochRecord { epoch, train_loss, validation_median_q });
        if let Some(q) = validation_median_q {
            if best.as_ref().is_none_or(|(b, _)| q < *b) {
                best = Some((q, model.params.clone()));
                history.best_epoch = Some(epoch);
                stale = 0;
            } else {
                stale += 1;
                if stale >= cfg.patience {
                    history.stopped_early = epoch < epochs;
                    break;
                }
            }
        }
    }
    if let Some((_, params)) = best {
        model.params = params;
    }
    Ok(history)
}

/// Trains a fresh model. Validation samples must come from databases that
/// contribute no training samples.
pub fn train(train: &[Sample], validation: &[Sample], cfg: &ModelConfig) -> Result<(CostModel, History)> {
    let first = train.first().ok_or_else(|| Error::Model("empty training set".into()))?;
    let train_dbs: std::collections::BTreeSet<&str> = train.iter().map(|s| s.database.as_str()).collect();
    if let Some(s) = validation.iter().find(|s| train_dbs.contains(s.database.as_str())) {
        return Err(Error::Model(format!("validation database `{}` also provides training samples", s.database)));
    }
    let mut model = CostModel::new(cfg.clone(), first.graph.schema.clone())?;
    check_samples(&model, train)?;
    // start from the mean label so early epochs fit shape, not offset
    let mean = train.iter().map(|s| s.label).sum::<f64>() / train.len() as f64;
    let b = model.output_bias();
    model.params[b] = mean;
    let history = fit(&mut model, train, validation, cfg.epochs, cfg.learning_rate, "train-shuffle")?;
    Ok((model, history))
}

/// Few-shot adaptation: a copy of `model` trained further on `samples` at a
/// tenth of its learning rate for `min(epochs, 20)` epochs.
pub fn finetune(model: &CostModel, samples: &[Sample], epochs: usize) -> Result<(CostModel, History)> {
    if samples.is_empty() {
        return Err(Error::Model("empty fine-tuning set".into()));
    }
    let mut tuned = model.clone();
    let lr = model.config.learning_rate / 10.0;
    let history = fit(&mut tuned, samples, &[], epochs.min(FINETUNE_MAX_EPOCHS), lr, "finetune-shuffle")?;
    Ok((tuned, history))
}
