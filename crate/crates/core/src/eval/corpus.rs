//! Generated databases with their executed, annotated workloads.

use rayon::prelude::*;

use crate::encoding::{encode, encode_onehot_ablation, CardMode, OneHotRegistry};
use crate::executor::{annotate_actuals, execute, CostWeights};
use crate::model::Sample;
use crate::planner::{analytic_cost, plan, PhysicalPlan};
use crate::relcore::{compute_statistics, generate_database, Catalog, Database, GenConfig, IndexDef};
use crate::workload::{generate_index_set, generate_workload, QuerySpec, WorkloadConfig};
use crate::{rng, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ExecutedQuery {
    pub query: QuerySpec,
    /// Carries estimates, analytic costs and actuals.
    pub plan: PhysicalPlan,
    pub cost_units: f64,
    pub analytic_cost: f64,
}

#[derive(Debug, Clone)]
pub struct DatabaseArtifacts {
    pub name: String,
    pub database: Database,
    pub catalog: Catalog,
    /// Indexes materialized before the workload ran.
    pub indexes: Vec<IndexDef>,
    pub queries: Vec<ExecutedQuery>,
    pub warnings: Vec<String>,
}

impl DatabaseArtifacts {
    pub fn total_cost_units(&self) -> f64 {
        self.queries.iter().map(|q| q.cost_units).sum()
    }
}

pub fn execute_query(
    q: &QuerySpec,
    db: &Database,
    catalog: &Catalog,
    indexes: &[IndexDef],
    weights: &CostWeights,
) -> Result<ExecutedQuery> {
    let mut p = plan(q, catalog, indexes)?;
    let r = execute(&p, db, weights)?;
    annotate_actuals(&mut p, &r)?;
    Ok(ExecutedQuery { query: q.clone(), analytic_cost: analytic_cost(&p, catalog)?, cost_units: r.cost_units, plan: p })
}

pub fn execute_all(
    queries: &[QuerySpec],
    db: &Database,
    catalog: &Catalog,
    indexes: &[IndexDef],
    weights: &CostWeights,
) -> Result<Vec<ExecutedQuery>> {
    queries.par_iter().map(|q| execute_query(q, db, catalog, indexes, weights)).collect()
}

/// Random workload of `count` queries drawn from the stream `label` of `seed`.
pub fn workload_for(
    db: &Database,
    catalog: &Catalog,
    template: &WorkloadConfig,
    count: usize,
    seed: u64,
    label: &str,
) -> Result<(Vec<QuerySpec>, Vec<String>)> {
    let cfg = WorkloadConfig { query_count: count, seed: rng::derive(seed, label), ..template.clone() };
    let w = generate_workload(db, catalog, &cfg)?;
    Ok((w.queries, w.warnings))
}

#[allow(clippy::too_many_arguments)]
pub fn prepare_database(
    name: &str,
    seed: u64,
    generator: &GenConfig,
    workload: &WorkloadConfig,
    queries: usize,
    index_count: usize,
    weights: &CostWeights,
    buckets: usize,
) -> Result<DatabaseArtifacts> {
    let mut database = generate_database(name, generator, seed).map_err(|e| e.in_stage("generate"))?;
    let catalog = compute_statistics(&database, buckets);
    let indexes = if index_count > 0 { generate_index_set(&database, index_count, rng::derive(seed, "index-set"))? } else { Vec::new() };
    for i in &indexes {
        database.build_index(i)?;
    }
    let (specs, warnings) = workload_for(&database, &catalog, workload, queries, seed, "workload").map_err(|e| e.in_stage("workload"))?;
    let executed = execute_all(&specs, &database, &catalog, &indexes, weights).map_err(|e| e.in_stage("execute"))?;
    log::info!("{name}: {} queries executed", executed.len());
    Ok(DatabaseArtifacts { name: name.to_string(), database, catalog, indexes, queries: executed, warnings })
}

pub fn encode_samples(db: &DatabaseArtifacts, queries: &[ExecutedQuery], mode: CardMode) -> Result<Vec<Sample>> {
    queries
        .par_iter()
        .map(|q| {
            let g = encode(&q.plan, &db.catalog, mode)?;
            Sample::new(&g, q.cost_units, &db.name, q.query.id)
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.in_stage("encode"))
}

pub fn encode_onehot_samples(db: &DatabaseArtifacts, queries: &[ExecutedQuery], mode: CardMode, registry: &OneHotRegistry) -> Result<Vec<Sample>> {
    queries
        .par_iter()
        .map(|q| {
            let g = encode_onehot_ablation(&q.plan, &db.catalog, mode, registry)?;
            Sample::new(&g, q.cost_units, &db.name, q.query.id)
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.in_stage("encode"))
}

pub(crate) fn lookup<'a>(corpus: &'a [DatabaseArtifacts], name: &str) -> Result<&'a DatabaseArtifacts> {
    corpus.iter().find(|d| d.name == name).ok_or_else(|| Error::Config(format!("database `{name}` is not part of the corpus")))
}
