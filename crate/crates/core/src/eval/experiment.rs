//! Leave-one-database-out experiments.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::IndexedRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::baseline::{fit_scaled_cost_baseline, ScaledCostFit};
use super::corpus::{encode_onehot_samples, encode_samples, execute_all, lookup, prepare_database, workload_for, DatabaseArtifacts, ExecutedQuery};
use super::{evaluate, predictions, Metrics};
use crate::encoding::{encode, CardMode, OneHotRegistry};
use crate::executor::{annotate_actuals, execute, CostWeights};
use crate::model::{finetune, train, CostModel, History, ModelConfig, PreparedGraph, Sample};
use crate::planner::{hypothetical_plan, plan, PhysicalOp};
use crate::relcore::{GenConfig, IndexDef};
use crate::workload::WorkloadConfig;
use crate::{rng, Error, Result};

pub const SPEC_VERSION: u32 = 1;
pub const REPORT_FORMAT: &str = "report_v1";

/// Published Q-errors of a What-If index workload on a Postgres/IMDB
/// setup: median, p95 and max for exact and estimated cardinalities.
/// Context only; the work-unit numbers here are not comparable.
pub const REFERENCE_INDEX_ROW: [(CardMode, [f64; 3]); 2] =
    [(CardMode::Exact, [1.21, 2.51, 10.73]), (CardMode::Estimated, [1.33, 3.59, 24.62])];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatabaseSpec {
    pub name: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSpec {
    /// Target-database training set sizes for the scaled-cost baseline.
    pub scaled_cost_sizes: Vec<usize>,
    pub onehot_ablation: bool,
}

impl Default for BaselineSpec {
    fn default() -> Self {
        BaselineSpec { scaled_cost_sizes: vec![100, 500, 1000, 5000], onehot_ablation: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneSpec {
    pub samples: usize,
    /// Size of the evaluation split, taken from the held-out workload.
    pub eval_queries: usize,
    pub epochs: usize,
}

impl Default for FinetuneSpec {
    fn default() -> Self {
        FinetuneSpec { samples: 100, eval_queries: 500, epochs: 20 }
    }
}

fn default_queries() -> usize {
    5000
}
fn default_modes() -> Vec<CardMode> {
    vec![CardMode::Exact, CardMode::Estimated]
}
fn default_index_count() -> usize {
    5
}
fn default_stagnation() -> Vec<usize> {
    vec![1, 2, 4, 8]
}
fn default_finetune() -> Option<FinetuneSpec> {
    Some(FinetuneSpec::default())
}
fn default_buckets() -> usize {
    crate::relcore::DEFAULT_BUCKETS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub version: u32,
    #[serde(default)]
    pub seed: u64,
    pub databases: Vec<DatabaseSpec>,
    #[serde(default)]
    pub generator: GenConfig,
    #[serde(default = "default_queries")]
    pub queries_per_database: usize,
    /// Query shape; its `query_count` and `seed` are replaced per database.
    #[serde(default)]
    pub workload: WorkloadConfig,
    pub holdout: String,
    #[serde(default)]
    pub validation: Vec<String>,
    /// Defaults to every database that is neither held out nor validation.
    #[serde(default)]
    pub training: Option<Vec<String>>,
    #[serde(default = "default_modes")]
    pub card_modes: Vec<CardMode>,
    #[serde(default)]
    pub index_mode: bool,
    /// Size of the random index set of each database in index mode.
    #[serde(default = "default_index_count")]
    pub indexes_per_database: usize,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub baselines: BaselineSpec,
    /// Training-set sizes (in databases) for the stagnation curve; the
    /// full training set is always included.
    #[serde(default = "default_stagnation")]
    pub stagnation_sizes: Vec<usize>,
    #[serde(default = "default_finetune")]
    pub finetune: Option<FinetuneSpec>,
    #[serde(default)]
    pub weights: CostWeights,
    #[serde(default = "default_buckets")]
    pub histogram_buckets: usize,
}

impl ExperimentSpec {
    /// A spec over `count` databases named `db00`, `db01`, ... with seeds
    /// derived from `seed`.
    pub fn with_databases(count: usize, seed: u64, holdout: usize, validation: usize) -> ExperimentSpec {
        let databases: Vec<DatabaseSpec> =
            (0..count).map(|i| DatabaseSpec { name: format!("db{i:02}"), seed: rng::derive(seed, &format!("database-{i}")) }).collect();
        ExperimentSpec {
            version: SPEC_VERSION,
            seed,
            holdout: databases[holdout].name.clone(),
            validation: vec![databases[validation].name.clone()],
            databases,
            generator: GenConfig::default(),
            queries_per_database: default_queries(),
            workload: WorkloadConfig::default(),
            training: None,
            card_modes: default_modes(),
            index_mode: false,
            indexes_per_database: default_index_count(),
            model: ModelConfig::default(),
            baselines: BaselineSpec::default(),
            stagnation_sizes: default_stagnation(),
            finetune: default_finetune(),
            weights: CostWeights::default(),
            histogram_buckets: default_buckets(),
        }
    }

    pub fn from_json(text: &str) -> Result<ExperimentSpec> {
        let spec: ExperimentSpec = serde_json::from_str(text).map_err(|e| Error::Config(format!("experiment spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn training_databases(&self) -> Vec<String> {
        match &self.training {
            Some(t) => t.clone(),
            None => self
                .databases
                .iter()
                .map(|d| d.name.clone())
                .filter(|n| *n != self.holdout && !self.validation.contains(n))
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.version != SPEC_VERSION {
            return bad(format!("unsupported spec version {}", self.version));
        }
        let names: BTreeSet<&str> = self.databases.iter().map(|d| d.name.as_str()).collect();
        if names.len() != self.databases.len() {
            return bad("database names must be unique".into());
        }
        if !names.contains(self.holdout.as_str()) {
            return bad(format!("held-out database `{}` is not listed", self.holdout));
        }
        for v in &self.validation {
            if !names.contains(v.as_str()) {
                return bad(format!("validation database `{v}` is not listed"));
            }
            if *v == self.holdout {
                return bad("the held-out database cannot be used for validation".into());
            }
        }
        let training = self.training_databases();
        if training.is_empty() {
            return bad("no training databases left".into());
        }
        for t in &training {
            if *t == self.holdout {
                return bad(format!("held-out database `{t}` is listed for training"));
            }
            if self.validation.contains(t) {
                return bad(format!("validation database `{t}` is listed for training"));
            }
            if !names.contains(t.as_str()) {
                return bad(format!("training database `{t}` is not listed"));
            }
        }
        if self.card_modes.is_empty() {
            return bad("at least one cardinality mode is required".into());
        }
        if self.queries_per_database == 0 {
            return bad("queries_per_database must be positive".into());
        }
        self.generator.validate()?;
        self.model.validate()?;
        self.weights.validate()
    }

    fn target_pool_size(&self) -> usize {
        let sizes = self.baselines.scaled_cost_sizes.iter().copied().max().unwrap_or(0);
        sizes.max(self.finetune.as_ref().map_or(0, |f| f.samples))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeResult {
    pub mode: CardMode,
    pub metrics: Metrics,
    pub history: History,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselinePoint {
    pub n: usize,
    pub fit: ScaledCostFit,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagnationPoint {
    pub n_databases: usize,
    pub val_median_q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneResult {
    pub mode: CardMode,
    pub samples: usize,
    pub eval_queries: usize,
    pub zero_shot_median_q: f64,
    pub finetuned_median_q: f64,
    /// Median Q-error on the training databases before and after.
    pub training_median_q_before: f64,
    pub training_median_q_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionCheck {
    /// Pairs whose ground-truth cost changes by at least 2x with the index.
    pub eligible: usize,
    pub correct: usize,
    pub fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexModeResult {
    pub mode: CardMode,
    pub metrics: Metrics,
    pub direction: DirectionCheck,
    pub history: History,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexReport {
    /// Query/index pairs evaluated on the held-out database.
    pub pairs: usize,
    /// Pairs whose plan actually scans the hypothetical index.
    pub pairs_using_index: usize,
    pub modes: Vec<IndexModeResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checks {
    pub holdout_samples_in_training: usize,
    pub leak_free: bool,
    /// Exact-cardinality median within 0.1 of (or below) the estimated one.
    pub exact_not_worse_than_estimated: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub format: String,
    pub holdout: String,
    pub validation: Vec<String>,
    pub training: Vec<String>,
    pub queries_per_database: usize,
    /// Executed work units of all training workloads.
    pub total_training_cost_units: f64,
    pub zero_shot: Vec<ModeResult>,
    pub onehot_ablation: Option<ModeResult>,
    pub scaled_cost: Vec<BaselinePoint>,
    /// Zero-shot median on the held-out workload that the baseline curve is
    /// compared against.
    pub curve_reference: Option<ModeResult>,
    pub stagnation: Vec<StagnationPoint>,
    pub finetune: Option<FinetuneResult>,
    pub index: Option<IndexReport>,
    pub checks: Checks,
    pub warnings: Vec<String>,
}

impl ExperimentReport {
    pub fn zero_shot(&self, mode: CardMode) -> Option<&ModeResult> {
        self.zero_shot.iter().find(|r| r.mode == mode)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn figure3_csv(&self) -> String {
        let zero = self.curve_reference.as_ref().map(|r| r.metrics.median);
        let mut out = String::from("n_train_queries,baseline_median_q,zeroshot_median_q\n");
        for p in &self.scaled_cost {
            let z = zero.map(|z| z.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{}", p.n, p.metrics.median, z);
        }
        out
    }

    pub fn stagnation_csv(&self) -> String {
        let mut out = String::from("n_databases,val_median_q\n");
        for p in &self.stagnation {
            let _ = writeln!(out, "{},{}", p.n_databases, p.val_median_q);
        }
        out
    }

    pub fn table1_csv(&self) -> String {
        let mut out = String::from("workload,mode,median,p95,max\n");
        let mut row = |w: &str, mode: CardMode, m: &Metrics| {
            let _ = writeln!(out, "{w},{mode},{},{},{}", m.median, m.p95, m.max);
        };
        for r in &self.zero_shot {
            row("holdout", r.mode, &r.metrics);
        }
        if let Some(r) = &self.onehot_ablation {
            row("holdout_onehot", r.mode, &r.metrics);
        }
        if let Some(ix) = &self.index {
            for r in &ix.modes {
                row("index", r.mode, &r.metrics);
            }
            for (mode, [median, p95, max]) in REFERENCE_INDEX_ROW {
                row("index_published_reference", mode, &Metrics { median, p95, max, count: 0 });
            }
        }
        out
    }

    /// Writes `report.json`, `figure3_curve.csv`, `stagnation.csv` and `table1.csv`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files = [
            ("report.json", self.to_json()?),
            ("figure3_curve.csv", self.figure3_csv()),
            ("stagnation.csv", self.stagnation_csv()),
            ("table1.csv", self.table1_csv()),
        ];
        for (name, body) in files {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}

/// Generates, plans and executes every database of `spec`. In index mode
/// each database first receives its random index set.
pub fn prepare_corpus(spec: &ExperimentSpec) -> Result<Vec<DatabaseArtifacts>> {
    spec.validate()?;
    let indexes = if spec.index_mode { spec.indexes_per_database } else { 0 };
    spec.databases
        .par_iter()
        .map(|d| {
            prepare_database(
                &d.name,
                d.seed,
                &spec.generator,
                &spec.workload,
                spec.queries_per_database,
                indexes,
                &spec.weights,
                spec.histogram_buckets,
            )
        })
        .collect()
}

struct Leakage<'a> {
    holdout: &'a str,
    count: usize,
}

impl Leakage<'_> {
    fn audit(&mut self, samples: &[Sample]) {
        self.count += samples.iter().filter(|s| s.database == self.holdout).count();
    }
}

fn save_model(out: Option<&Path>, name: &str, model: &CostModel) -> Result<()> {
    if let Some(dir) = out {
        let models = dir.join("models");
        std::fs::create_dir_all(&models).map_err(|e| Error::io(&models, e))?;
        model.save(&models.join(format!("{name}.bin")))?;
    }
    Ok(())
}

fn concat_samples(parts: Vec<Vec<Sample>>) -> Vec<Sample> {
    parts.into_iter().flatten().collect()
}

fn mode_samples(corpus: &[DatabaseArtifacts], names: &[String], mode: CardMode) -> Result<Vec<Sample>> {
    let parts = names
        .iter()
        .map(|n| {
            let db = lookup(corpus, n)?;
            encode_samples(db, &db.queries, mode)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(concat_samples(parts))
}

/// Runs the full protocol on the default corpus of `spec`.
pub fn run_experiment(spec: &ExperimentSpec, out: Option<&Path>) -> Result<ExperimentReport> {
    let corpus = prepare_corpus(spec)?;
    run_on_corpus(spec, &corpus, out)
}

/// Runs the protocol on an already prepared corpus, which must contain
/// every database the spec names.
pub fn run_on_corpus(spec: &ExperimentSpec, corpus: &[DatabaseArtifacts], out: Option<&Path>) -> Result<ExperimentReport> {
    spec.validate()?;
    let training = spec.training_databases();
    let target = lookup(corpus, &spec.holdout)?;
    let mut warnings: Vec<String> = Vec::new();
    for d in corpus {
        warnings.extend(d.warnings.iter().map(|w| format!("{}: {w}", d.name)));
    }
    let mut leak = Leakage { holdout: &spec.holdout, count: 0 };
    let total_training_cost_units = training.iter().map(|n| lookup(corpus, n).map(|d| d.total_cost_units())).sum::<Result<f64>>()?;

    let mut zero_shot = Vec::new();
    let mut exact_model: Option<(CostModel, Vec<Sample>, Vec<Sample>)> = None;
    let mut models = Vec::new();
    for &mode in &spec.card_modes {
        let train_set = mode_samples(corpus, &training, mode)?;
        let val_set = mode_samples(corpus, &spec.validation, mode)?;
        leak.audit(&train_set);
        let (model, history) = train(&train_set, &val_set, &spec.model).map_err(|e| e.in_stage("train"))?;
        save_model(out, &format!("zero_shot_{mode}"), &model)?;
        let test = encode_samples(target, &target.queries, mode)?;
        let metrics = evaluate(&model, &test).map_err(|e| e.in_stage("evaluate"))?;
        log::info!("{} {mode}: median q {:.3}", spec.holdout, metrics.median);
        zero_shot.push(ModeResult { mode, metrics, history: history.clone() });
        if mode == CardMode::Exact {
            exact_model = Some((model.clone(), train_set, val_set));
        }
        models.push((mode, model, test));
    }

    let onehot_ablation = if spec.baselines.onehot_ablation {
        let mode = spec.card_modes[0];
        let mut seen: Vec<&DatabaseArtifacts> = Vec::new();
        for n in training.iter().chain(&spec.validation) {
            seen.push(lookup(corpus, n)?);
        }
        let registry = OneHotRegistry::from_catalogs(seen.iter().map(|d| &d.catalog));
        let encode_set = |names: &[String]| -> Result<Vec<Sample>> {
            let parts = names
                .iter()
                .map(|n| {
                    let db = lookup(corpus, n)?;
                    encode_onehot_samples(db, &db.queries, mode, &registry)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(concat_samples(parts))
        };
        let train_set = encode_set(&training)?;
        let val_set = encode_set(&spec.validation)?;
        leak.audit(&train_set);
        let (model, history) = train(&train_set, &val_set, &spec.model).map_err(|e| e.in_stage("train"))?;
        save_model(out, "onehot_ablation", &model)?;
        let test = encode_onehot_samples(target, &target.queries, mode, &registry)?;
        let metrics = evaluate(&model, &test).map_err(|e| e.in_stage("evaluate"))?;
        log::info!("{} one-hot {mode}: median q {:.3}", spec.holdout, metrics.median);
        Some(ModeResult { mode, metrics, history })
    } else {
        None
    };

    // queries on the target that the zero-shot model never sees: fitting
    // data for the baseline and fine-tuning
    let pool_size = spec.target_pool_size();
    let target_pool: Vec<ExecutedQuery> = if pool_size > 0 {
        let seed = spec.databases.iter().find(|d| d.name == spec.holdout).expect("validated").seed;
        let (queries, w) = workload_for(&target.database, &target.catalog, &spec.workload, pool_size, seed, "target-train")?;
        warnings.extend(w.into_iter().map(|w| format!("{} target pool: {w}", spec.holdout)));
        execute_all(&queries, &target.database, &target.catalog, &target.indexes, &spec.weights).map_err(|e| e.in_stage("execute"))?
    } else {
        Vec::new()
    };

    let mut scaled_cost = Vec::new();
    for &n in &spec.baselines.scaled_cost_sizes {
        if n > target_pool.len() {
            warnings.push(format!("scaled-cost size {n} exceeds the target pool of {}", target_pool.len()));
            continue;
        }
        let pairs: Vec<(f64, f64)> = target_pool[..n].iter().map(|q| (q.analytic_cost, q.cost_units)).collect();
        let fit = fit_scaled_cost_baseline(&pairs)?;
        let metrics = Metrics::from_costs(target.queries.iter().map(|q| (fit.predict(q.analytic_cost), q.cost_units)))?;
        scaled_cost.push(BaselinePoint { n, fit, metrics });
    }
    // the baseline only sees optimizer estimates; compare against the
    // zero-shot model in the same position when it was trained
    let curve_reference = zero_shot
        .iter()
        .find(|r| r.mode == CardMode::Estimated)
        .or_else(|| zero_shot.first())
        .cloned();

    let mut stagnation = Vec::new();
    if let Some((full_model, _, val_set)) = &exact_model {
        if !val_set.is_empty() {
            let mut sizes: Vec<usize> = spec.stagnation_sizes.iter().copied().filter(|&k| k > 0 && k < training.len()).collect();
            sizes.sort_unstable();
            sizes.dedup();
            for k in sizes {
                let subset = &training[..k];
                let train_set = mode_samples(corpus, subset, CardMode::Exact)?;
                leak.audit(&train_set);
                let (model, _) = train(&train_set, val_set, &spec.model).map_err(|e| e.in_stage("train"))?;
                let q = super::median_qerror_of(&model, val_set)?;
                log::info!("stagnation {k} databases: validation median q {q:.3}");
                stagnation.push(StagnationPoint { n_databases: k, val_median_q: q });
            }
            stagnation.push(StagnationPoint { n_databases: training.len(), val_median_q: super::median_qerror_of(full_model, val_set)? });
        } else {
            warnings.push("no validation database: stagnation curve skipped".into());
        }
    }

    let finetune_result = match (&spec.finetune, models.first()) {
        (Some(f), Some((mode, model, test))) if f.samples > 0 && !target_pool.is_empty() => {
            let tune_set = encode_samples(target, &target_pool[..f.samples.min(target_pool.len())], *mode)?;
            let eval_set = &test[..f.eval_queries.min(test.len())];
            let (tuned, _) = finetune(model, &tune_set, f.epochs).map_err(|e| e.in_stage("finetune"))?;
            save_model(out, &format!("finetuned_{mode}"), &tuned)?;
            let train_set = mode_samples(corpus, &training, *mode)?;
            Some(FinetuneResult {
                mode: *mode,
                samples: tune_set.len(),
                eval_queries: eval_set.len(),
                zero_shot_median_q: super::median_qerror_of(model, eval_set)?,
                finetuned_median_q: super::median_qerror_of(&tuned, eval_set)?,
                training_median_q_before: super::median_qerror_of(model, &train_set)?,
                training_median_q_after: super::median_qerror_of(&tuned, &train_set)?,
            })
        }
        _ => None,
    };

    let exact_not_worse_than_estimated = match (
        zero_shot.iter().find(|r| r.mode == CardMode::Exact),
        zero_shot.iter().find(|r| r.mode == CardMode::Estimated),
    ) {
        (Some(e), Some(s)) => Some(e.metrics.median <= s.metrics.median + 0.1),
        _ => None,
    };
    if leak.count > 0 {
        return Err(Error::Eval(format!("{} held-out samples reached training", leak.count)).in_stage("leak audit"));
    }
    let report = ExperimentReport {
        format: REPORT_FORMAT.to_string(),
        holdout: spec.holdout.clone(),
        validation: spec.validation.clone(),
        training,
        queries_per_database: spec.queries_per_database,
        total_training_cost_units,
        zero_shot,
        onehot_ablation,
        scaled_cost,
        curve_reference,
        stagnation,
        finetune: finetune_result,
        index: None,
        checks: Checks { holdout_samples_in_training: leak.count, leak_free: true, exact_not_worse_than_estimated },
        warnings,
    };
    if let Some(dir) = out {
        report.write(dir)?;
    }
    Ok(report)
}

struct IndexPair {
    /// Plan built as if the index existed, annotated with the actuals of
    /// its execution on the materialized index.
    hypothetical: crate::planner::PhysicalPlan,
    cost_with: f64,
    cost_without: f64,
    uses_index: bool,
}

/// Index pairs for the held-out database: one random predicate column of
/// each query that filters, as a single-column index.
fn index_pairs(spec: &ExperimentSpec, target: &DatabaseArtifacts, base: &[ExecutedQuery]) -> Result<Vec<(usize, IndexPair)>> {
    let mut r = rng::derive_rng(spec.seed, &format!("index-pairs/{}", spec.holdout));
    let mut choices = Vec::new();
    for (i, q) in base.iter().enumerate() {
        let mut columns: Vec<(String, String)> = Vec::new();
        for f in &q.query.filters {
            for l in f.predicate.leaves() {
                let c = (f.table.clone(), l.column.clone());
                if !columns.contains(&c) {
                    columns.push(c);
                }
            }
        }
        if let Some((t, c)) = columns.choose(&mut r) {
            choices.push((i, IndexDef::new(t.clone(), c.clone())));
        }
    }
    let mut materialized = target.database.clone();
    materialized.drop_indexes();
    let distinct: BTreeSet<&IndexDef> = choices.iter().map(|(_, d)| d).collect();
    for d in distinct {
        materialized.build_index(d)?;
    }
    choices
        .par_iter()
        .map(|(i, def)| {
            let q = &base[*i];
            let real = plan(&q.query, &target.catalog, std::slice::from_ref(def))?;
            let truth = execute(&real, &materialized, &spec.weights)?;
            let mut hypothetical = hypothetical_plan(&q.query, &target.catalog, &[], std::slice::from_ref(def))?;
            if !hypothetical.same_structure(&real) {
                return Err(Error::Eval(format!("hypothetical plan of query {} differs from the materialized plan", q.query.id)));
            }
            annotate_actuals(&mut hypothetical, &truth)?;
            let uses_index = hypothetical.nodes.iter().any(|n| matches!(n.op, PhysicalOp::IndexScan { .. }));
            Ok((*i, IndexPair { hypothetical, cost_with: truth.cost_units, cost_without: q.cost_units, uses_index }))
        })
        .collect()
}

/// What-If protocol: training databases carry random index sets; on the
/// held-out database the model predicts from hypothetical-index plans and
/// is scored against executions on the materialized index.
pub fn run_index_experiment(spec: &ExperimentSpec, out: Option<&Path>) -> Result<ExperimentReport> {
    let spec = ExperimentSpec { index_mode: true, ..spec.clone() };
    let corpus = prepare_corpus(&spec)?;
    run_index_on_corpus(&spec, &corpus, out)
}

pub fn run_index_on_corpus(spec: &ExperimentSpec, corpus: &[DatabaseArtifacts], out: Option<&Path>) -> Result<ExperimentReport> {
    spec.validate()?;
    let training = spec.training_databases();
    let target = lookup(corpus, &spec.holdout)?;
    let mut leak = Leakage { holdout: &spec.holdout, count: 0 };
    let mut warnings: Vec<String> = Vec::new();
    for d in corpus {
        warnings.extend(d.warnings.iter().map(|w| format!("{}: {w}", d.name)));
    }
    let total_training_cost_units = training.iter().map(|n| lookup(corpus, n).map(|d| d.total_cost_units())).sum::<Result<f64>>()?;

    // the held-out workload without any index
    let base = if target.indexes.is_empty() {
        target.queries.clone()
    } else {
        let plain: Vec<_> = target.queries.iter().map(|q| q.query.clone()).collect();
        execute_all(&plain, &target.database, &target.catalog, &[], &spec.weights)?
    };
    let pairs = if spec.indexes_per_database > 0 { index_pairs(spec, target, &base).map_err(|e| e.in_stage("index pairs"))? } else { Vec::new() };

    let mut modes = Vec::new();
    let mut zero_shot = Vec::new();
    for &mode in &spec.card_modes {
        let train_set = mode_samples(corpus, &training, mode)?;
        let val_set = mode_samples(corpus, &spec.validation, mode)?;
        leak.audit(&train_set);
        let (model, history) = train(&train_set, &val_set, &spec.model).map_err(|e| e.in_stage("train"))?;
        save_model(out, &format!("index_{mode}"), &model)?;
        let plain = encode_samples(target, &base, mode)?;
        if pairs.is_empty() {
            let metrics = evaluate(&model, &plain)?;
            zero_shot.push(ModeResult { mode, metrics, history });
            continue;
        }
        let with: Vec<Sample> = pairs
            .par_iter()
            .map(|(i, p)| {
                let g = encode(&p.hypothetical, &target.catalog, mode)?;
                Sample::new(&g, p.cost_with, &target.name, base[*i].query.id)
            })
            .collect::<Result<_>>()?;
        let predicted_with = predictions(&model, &with)?;
        let metrics = Metrics::from_qerrors(
            &predicted_with.iter().zip(&with).map(|(p, s)| super::qerror(*p, s.cost + 1.0)).collect::<Result<Vec<_>>>()?,
        )?;
        let without: Vec<&PreparedGraph> = pairs.iter().map(|(i, _)| &plain[*i].graph).collect();
        let predicted_without = without.par_iter().map(|g| model.forward(g).map(|v| v.clamp(-700.0, 700.0).exp())).collect::<Result<Vec<_>>>()?;
        let mut direction = DirectionCheck { eligible: 0, correct: 0, fraction: None };
        for (k, (_, p)) in pairs.iter().enumerate() {
            let (a, b) = (p.cost_with + 1.0, p.cost_without + 1.0);
            if a.max(b) >= 2.0 * a.min(b) {
                direction.eligible += 1;
                if (predicted_with[k] < predicted_without[k]) == (a < b) {
                    direction.correct += 1;
                }
            }
        }
        if direction.eligible > 0 {
            direction.fraction = Some(direction.correct as f64 / direction.eligible as f64);
        }
        log::info!("index {mode}: median q {:.3}, direction {:?}", metrics.median, direction.fraction);
        modes.push(IndexModeResult { mode, metrics, direction, history });
    }
    if leak.count > 0 {
        return Err(Error::Eval(format!("{} held-out samples reached training", leak.count)).in_stage("leak audit"));
    }
    let exact_not_worse_than_estimated = None;
    let report = ExperimentReport {
        format: REPORT_FORMAT.to_string(),
        holdout: spec.holdout.clone(),
        validation: spec.validation.clone(),
        training,
        queries_per_database: spec.queries_per_database,
        total_training_cost_units,
        zero_shot,
        onehot_ablation: None,
        scaled_cost: Vec::new(),
        curve_reference: None,
        stagnation: Vec::new(),
        finetune: None,
        index: (!pairs.is_empty()).then(|| IndexReport {
            pairs: pairs.len(),
            pairs_using_index: pairs.iter().filter(|(_, p)| p.uses_index).count(),
            modes,
        }),
        checks: Checks { holdout_samples_in_training: leak.count, leak_free: true, exact_not_worse_than_estimated },
        warnings,
    };
    if let Some(dir) = out {
        report.write(dir)?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relcore::Range;

    pub(crate) fn small_spec(databases: usize, queries: usize) -> ExperimentSpec {
        let mut spec = ExperimentSpec::with_databases(databases, 11, 0, 0);
        spec.validation.clear();
        spec.generator.table_count = Range::new(2, 4);
        spec.generator.rows = Range::new(100, 1_000);
        spec.queries_per_database = queries;
        spec.workload.max_join_size = 3;
        spec.model = ModelConfig { hidden: 8, epochs: 2, batch_size: 16, ..ModelConfig::default() };
        spec.baselines.scaled_cost_sizes = vec![10, 20];
        spec.stagnation_sizes = vec![1];
        spec.finetune = Some(FinetuneSpec { samples: 10, eval_queries: 20, epochs: 2 });
        spec.indexes_per_database = 2;
        spec
    }

    #[test]
    fn smoke_run_produces_a_full_report() {
        let spec = small_spec(2, 50);
        let dir = tempfile::tempdir().unwrap();
        let report = run_experiment(&spec, Some(dir.path())).unwrap();
        assert_eq!(report.training, vec!["db01".to_string()]);
        assert_eq!(report.zero_shot.len(), 2);
        for r in &report.zero_shot {
            assert_eq!(r.metrics.count, 50);
            assert!(1.0 <= r.metrics.median && r.metrics.median <= r.metrics.p95 && r.metrics.p95 <= r.metrics.max);
        }
        assert!(report.onehot_ablation.is_some());
        assert_eq!(report.scaled_cost.len(), 2);
        assert!(report.finetune.is_some());
        assert!(report.checks.leak_free);
        for f in ["report.json", "figure3_curve.csv", "stagnation.csv", "table1.csv", "models/zero_shot_exact.bin"] {
            assert!(dir.path().join(f).exists(), "{f} missing");
        }
        let csv = std::fs::read_to_string(dir.path().join("figure3_curve.csv")).unwrap();
        assert!(csv.starts_with("n_train_queries,baseline_median_q,zeroshot_median_q\n10,"));
    }

    #[test]
    fn holdout_in_training_is_rejected() {
        let mut spec = small_spec(3, 10);
        spec.training = Some(vec!["db00".into(), "db01".into()]);
        let err = run_experiment(&spec, None).unwrap_err().to_string();
        assert!(err.contains("held-out database `db00`"), "{err}");
        spec.training = None;
        spec.validation = vec!["db00".into()];
        assert!(spec.validate().is_err());
    }

    #[test]
    fn spec_json_rejects_unknown_keys() {
        let spec = small_spec(2, 10);
        let text = serde_json::to_string(&spec).unwrap();
        assert_eq!(ExperimentSpec::from_json(&text).unwrap(), spec);
        let typo = text.replacen("\"holdout\"", "\"hold_out\"", 1);
        assert!(ExperimentSpec::from_json(&typo).is_err());
    }

    #[test]
    fn baseline_on_generated_data_matches_normal_equations() {
        let spec = small_spec(1, 1000);
        let d = &spec.databases[0];
        let db = prepare_database(&d.name, d.seed, &spec.generator, &spec.workload, 1000, 0, &spec.weights, 32).unwrap();
        let pairs: Vec<(f64, f64)> = db.queries.iter().map(|q| (q.analytic_cost, q.cost_units)).collect();
        let fit = fit_scaled_cost_baseline(&pairs).unwrap();
        let n = pairs.len() as f64;
        let (sx, sy) = pairs.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
        let (sxx, sxy) = pairs.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x * x, b + x * y));
        let det = n * sxx - sx * sx;
        let slope = (n * sxy - sx * sy) / det;
        let intercept = (sxx * sy - sx * sxy) / det;
        for (x, y) in &pairs {
            let ours = y - fit.predict(*x);
            let oracle = y - (slope * x + intercept);
            assert!((ours - oracle).abs() <= 1e-9 * y.abs().max(1.0), "{ours} vs {oracle}");
        }
    }

    #[test]
    fn empty_index_sets_degenerate_to_the_plain_experiment() {
        let mut spec = small_spec(2, 30);
        spec.card_modes = vec![CardMode::Exact];
        spec.indexes_per_database = 0;
        spec.index_mode = true;
        let index = run_index_experiment(&spec, None).unwrap();
        assert!(index.index.is_none());
        let plain = run_experiment(&ExperimentSpec { index_mode: false, ..spec }, None).unwrap();
        assert_eq!(index.zero_shot[0].metrics, plain.zero_shot[0].metrics);
    }

    #[test]
    fn index_experiment_scores_hypothetical_plans() {
        let mut spec = small_spec(2, 60);
        spec.card_modes = vec![CardMode::Exact];
        let report = run_index_experiment(&spec, None).unwrap();
        let ix = report.index.clone().expect("pairs");
        assert!(ix.pairs > 0);
        assert_eq!(ix.modes[0].metrics.count, ix.pairs);
        assert!(ix.modes[0].direction.correct <= ix.modes[0].direction.eligible);
        let table = report.table1_csv();
        assert!(table.contains("index_published_reference,exact,1.21,2.51,10.73"));
    }

    #[test]
    fn reports_are_deterministic() {
        let spec = small_spec(2, 30);
        let a = run_experiment(&spec, None).unwrap().to_json().unwrap();
        let b = run_experiment(&spec, None).unwrap().to_json().unwrap();
        assert_eq!(a, b);
    }
}
