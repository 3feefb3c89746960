use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{AggFunc, Aggregate, ColumnRef, CompareOp, Leaf, PredicateTree, QuerySpec, TableFilter};
use crate::relcore::{Catalog, ColumnRole, Database, DataType, IndexDef, Range};
use crate::rng::{self, Rng};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadConfig {
    pub query_count: usize,
    pub max_join_size: usize,
    /// Total predicate leaves per query, uniform over the range.
    pub predicates: Range<usize>,
    pub aggregates: Range<usize>,
    /// Share of literals copied from actual column values; the rest are
    /// uniform over the column domain.
    pub literal_from_data: f64,
    pub seed: u64,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        WorkloadConfig {
            query_count: 5000,
            max_join_size: 5,
            predicates: Range::new(0, 5),
            aggregates: Range::new(1, 3),
            literal_from_data: 0.7,
            seed: 0,
        }
    }
}

impl WorkloadConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_join_size == 0 || self.max_join_size > 5 {
            return Err(Error::Config("max_join_size must lie in 1..=5".into()));
        }
        if self.predicates.min > self.predicates.max || self.predicates.max > 5 {
            return Err(Error::Config("predicates must be a range within 0..=5".into()));
        }
        if self.aggregates.min == 0 || self.aggregates.min > self.aggregates.max || self.aggregates.max > 3 {
            return Err(Error::Config("aggregates must be a range within 1..=3".into()));
        }
        if !(0.0..=1.0).contains(&self.literal_from_data) {
            return Err(Error::Config("literal_from_data must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Workload {
    pub queries: Vec<QuerySpec>,
    pub warnings: Vec<String>,
}

fn random_join_tree(db: &Database, size: usize, rng: &mut Rng) -> (Vec<String>, Vec<crate::relcore::ForeignKey>) {
    let start = &db.tables[rng.random_range(0..db.tables.len())].name;
    let mut tables = vec![start.clone()];
    let mut joins = Vec::new();
    while tables.len() < size {
        let frontier: Vec<_> = db
            .foreign_keys
            .iter()
            .filter(|fk| tables.contains(&fk.child_table) != tables.contains(&fk.parent_table))
            .collect();
        if frontier.is_empty() {
            break;
        }
        let fk = frontier[rng.random_range(0..frontier.len())].clone();
        let new = if tables.contains(&fk.child_table) { fk.parent_table.clone() } else { fk.child_table.clone() };
        tables.push(new);
        joins.push(fk);
    }
    (tables, joins)
}

fn literal(db: &Database, catalog: &Catalog, table: &str, column: &str, from_data: f64, rng: &mut Rng) -> Result<f64> {
    let col = db.column(table, column)?;
    let stats = catalog.column(table, column)?;
    if rng.random::<f64>() < from_data && stats.ndv > 0 {
        // rejection-sample a non-null row
        loop {
            let r = rng.random_range(0..col.len());
            if let Some(v) = col.value(r) {
                return Ok(v);
            }
        }
    }
    Ok(match (col.datatype(), stats.min, stats.max) {
        (DataType::Int, Some(lo), Some(hi)) => rng.random_range(lo as i64..=hi as i64) as f64,
        (DataType::Float, Some(lo), Some(hi)) if lo < hi => (rng.random_range(lo..=hi) * 64.0).round() / 64.0,
        (DataType::Float, Some(lo), _) => lo,
        (DataType::Categorical, _, _) => match &col.data {
            crate::relcore::ColumnData::Categorical { dictionary, .. } if !dictionary.is_empty() => {
                rng.random_range(0..dictionary.len()) as f64
            }
            _ => 0.0,
        },
        _ => 0.0,
    })
}

fn random_leaf(db: &Database, catalog: &Catalog, table: &str, cfg: &WorkloadConfig, rng: &mut Rng) -> Result<Leaf> {
    let t = db.table(table)?;
    let attrs: Vec<_> = t.columns.iter().filter(|c| c.role == ColumnRole::Attribute).collect();
    let col = attrs[rng.random_range(0..attrs.len())];
    let lit = |rng: &mut Rng| literal(db, catalog, table, &col.name, cfg.literal_from_data, rng);
    let (op, values) = if col.datatype() == DataType::Categorical {
        if rng.random::<f64>() < 0.6 {
            (CompareOp::Eq, vec![lit(rng)?])
        } else {
            let k = rng.random_range(2..=5);
            let mut values = Vec::with_capacity(k);
            for _ in 0..k {
                let v = lit(rng)?;
                if !values.contains(&v) {
                    values.push(v);
                }
            }
            values.sort_by(f64::total_cmp);
            (CompareOp::In, values)
        }
    } else {
        (CompareOp::NUMERIC[rng.random_range(0..5)], vec![lit(rng)?])
    };
    Ok(Leaf { column: col.name.clone(), op, values })
}

fn connective(rng: &mut Rng, children: Vec<PredicateTree>) -> PredicateTree {
    if rng.random::<f64>() < 0.7 {
        PredicateTree::And { children }
    } else {
        PredicateTree::Or { children }
    }
}

/// Shapes `leaves` into a tree of depth at most three: a root connective
/// over groups, each group a leaf or a connective over leaves.
fn shape_tree(mut leaves: Vec<Leaf>, rng: &mut Rng) -> PredicateTree {
    if leaves.len() == 1 {
        return PredicateTree::Leaf(leaves.pop().unwrap());
    }
    let n = leaves.len();
    let groups = rng.random_range(2..=n);
    // choose groups-1 distinct cut points in 1..n
    let mut cuts: Vec<usize> = sample(rng, n - 1, groups - 1).into_iter().map(|c| c + 1).collect();
    cuts.sort_unstable();
    let mut children = Vec::with_capacity(groups);
    let mut iter = leaves.into_iter();
    let mut prev = 0;
    for end in cuts.into_iter().chain(std::iter::once(n)) {
        let group: Vec<PredicateTree> = iter.by_ref().take(end - prev).map(PredicateTree::Leaf).collect();
        prev = end;
        children.push(if group.len() == 1 { group.into_iter().next().unwrap() } else { connective(rng, group) });
    }
    connective(rng, children)
}

fn random_query(db: &Database, catalog: &Catalog, cfg: &WorkloadConfig, max_join: usize, id: u64, rng: &mut Rng) -> Result<QuerySpec> {
    let size = rng.random_range(1..=max_join);
    let (tables, joins) = random_join_tree(db, size, rng);

    let filterable: Vec<&String> = tables
        .iter()
        .filter(|t| db.table(t).map(|t| t.columns.iter().any(|c| c.role == ColumnRole::Attribute)).unwrap_or(false))
        .collect();
    let mut per_table: Vec<Vec<Leaf>> = vec![Vec::new(); tables.len()];
    if !filterable.is_empty() {
        let n_leaves = rng.random_range(cfg.predicates.min..=cfg.predicates.max);
        for _ in 0..n_leaves {
            let t = filterable[rng.random_range(0..filterable.len())];
            let pos = tables.iter().position(|x| x == t).unwrap();
            per_table[pos].push(random_leaf(db, catalog, t, cfg, rng)?);
        }
    }
    let mut filters = Vec::new();
    for (t, leaves) in tables.iter().zip(per_table) {
        if !leaves.is_empty() {
            filters.push(TableFilter { table: t.clone(), predicate: shape_tree(leaves, rng) });
        }
    }

    let mut numeric = Vec::new();
    for t in &tables {
        for c in &db.table(t)?.columns {
            if c.role == ColumnRole::Attribute && c.datatype().is_numeric() {
                numeric.push(ColumnRef::new(t.clone(), c.name.clone()));
            }
        }
    }
    let n_aggs = rng.random_range(cfg.aggregates.min..=cfg.aggregates.max);
    let mut aggregates = Vec::with_capacity(n_aggs);
    for _ in 0..n_aggs {
        let func = AggFunc::ALL[rng.random_range(0..AggFunc::ALL.len())];
        if func == AggFunc::Count || numeric.is_empty() {
            aggregates.push(Aggregate { func: AggFunc::Count, column: None });
        } else {
            let c = numeric[rng.random_range(0..numeric.len())].clone();
            aggregates.push(Aggregate { func, column: Some(c) });
        }
    }
    Ok(QuerySpec { id, tables, joins, filters, aggregates })
}

/// Generates `cfg.query_count` random queries. Deterministic in `(db, catalog, cfg)`.
pub fn generate_workload(db: &Database, catalog: &Catalog, cfg: &WorkloadConfig) -> Result<Workload> {
    cfg.validate()?;
    if db.tables.is_empty() {
        return Err(Error::Config("database has no tables".into()));
    }
    let mut warnings = Vec::new();
    let max_join = cfg.max_join_size.min(db.tables.len());
    if max_join < cfg.max_join_size {
        warnings.push(format!(
            "max join size {} clamped to {} (foreign-key graph spans {} tables)",
            cfg.max_join_size,
            max_join,
            db.tables.len()
        ));
    }
    let mut rng = rng::derive_rng(cfg.seed, &format!("workload/{}", db.name));
    let queries = (0..cfg.query_count)
        .map(|i| random_query(db, catalog, cfg, max_join, i as u64, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(Workload { queries, warnings })
}

/// Columns eligible for random indexes: foreign keys and filterable attributes.
pub fn index_pool(db: &Database) -> Vec<IndexDef> {
    let mut pool = Vec::new();
    for t in &db.tables {
        for c in &t.columns {
            if matches!(c.role, ColumnRole::ForeignKey { .. } | ColumnRole::Attribute) {
                pool.push(IndexDef::new(t.name.clone(), c.name.clone()));
            }
        }
    }
    pool
}

/// Picks `k` distinct index targets uniformly from [`index_pool`].
pub fn generate_index_set(db: &Database, k: usize, seed: u64) -> Result<Vec<IndexDef>> {
    let pool = index_pool(db);
    if k > pool.len() {
        return Err(Error::Config(format!("{k} indexes requested but only {} eligible columns", pool.len())));
    }
    let mut rng = rng::derive_rng(seed, &format!("indexes/{}", db.name));
    let mut picked: Vec<usize> = sample(&mut rng, pool.len(), k).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| pool[i].clone()).collect())
}
