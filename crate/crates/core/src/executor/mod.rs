//! Deterministic plan execution over in-memory tables.
//!
//! Every elementary operation increments an integer counter. Weights are
//! applied once per operator after execution, so `cost_units` is a pure
//! function of `(plan, database, weights)`.

mod oracle;
mod sink;

pub use oracle::{brute_force_oracle, OracleResult, ORACLE_LIMIT};
pub use sink::{read_samples, write_samples, SampleFileHeader, SampleRecord, SAMPLE_FORMAT};

use serde::{Deserialize, Serialize};

use crate::planner::{PhysicalOp, PhysicalPlan};
use crate::relcore::{Column, Database, Table};
use crate::workload::{AggFunc, Aggregate, CompareOp, PredicateTree};
use crate::{Error, Result};

/// Work-unit prices of the elementary operations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostWeights {
    pub tuple_scan: f64,
    pub predicate_leaf_eval: f64,
    pub hash_insert: f64,
    /// Per probe and per colliding chain entry visited.
    pub hash_probe: f64,
    /// Per match emitted by a probe.
    pub hash_match: f64,
    /// Multiplies `log2(row_count)` per index probe.
    pub index_probe: f64,
    pub index_match_fetch: f64,
    pub aggregate_update: f64,
    pub page_touch: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        CostWeights {
            tuple_scan: 1.0,
            predicate_leaf_eval: 0.2,
            hash_insert: 2.0,
            hash_probe: 1.0,
            hash_match: 1.0,
            index_probe: 1.0,
            index_match_fetch: 1.2,
            aggregate_update: 0.5,
            page_touch: 2.0,
        }
    }
}

impl CostWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.tuple_scan,
            self.predicate_leaf_eval,
            self.hash_insert,
            self.hash_probe,
            self.hash_match,
            self.index_probe,
            self.index_match_fetch,
            self.aggregate_update,
            self.page_touch,
        ];
        if all.iter().all(|w| w.is_finite() && *w > 0.0) {
            Ok(())
        } else {
            Err(Error::Config("cost weights must be positive and finite".into()))
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounters {
    pub tuples_scanned: u64,
    pub leaf_evals: u64,
    pub pages: u64,
    pub hash_inserts: u64,
    pub hash_probes: u64,
    pub chain_collisions: u64,
    pub matches: u64,
    pub index_probes: u64,
    pub index_fetches: u64,
    pub aggregate_updates: u64,
}

impl OpCounters {
    /// `table_rows` prices index probes at `log2(max(rows, 2))`.
    pub fn cost(&self, w: &CostWeights, table_rows: u64) -> f64 {
        let probe_price = (table_rows.max(2) as f64).log2();
        w.tuple_scan * self.tuples_scanned as f64
            + w.predicate_leaf_eval * self.leaf_evals as f64
            + w.page_touch * self.pages as f64
            + w.hash_insert * self.hash_inserts as f64
            + w.hash_probe * (self.hash_probes + self.chain_collisions) as f64
            + w.hash_match * self.matches as f64
            + w.index_probe * probe_price * self.index_probes as f64
            + w.index_match_fetch * self.index_fetches as f64
            + w.aggregate_update * self.aggregate_updates as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpExec {
    pub actual_in: u64,
    pub actual_out: u64,
    pub counters: OpCounters,
    pub cost_units: f64,
    /// True selectivity of each predicate node of a scan over the whole
    /// table (uncounted instrumentation), preorder over predicate roots.
    pub selectivities: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecResult {
    /// One value per aggregate; `None` for SUM/AVG/MIN/MAX over no rows.
    pub values: Vec<Option<f64>>,
    pub ops: Vec<OpExec>,
    pub cost_units: f64,
    pub wall_time_ms: Option<f64>,
}

impl ExecResult {
    pub fn root_card(&self) -> u64 {
        self.ops.last().map(|o| o.actual_out).unwrap_or(0)
    }
}

/// Intermediate result: one row-position column per participating table.
struct Rel {
    tables: Vec<usize>,
    rows: Vec<Vec<u32>>,
}

impl Rel {
    fn len(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    fn slot(&self, table: usize) -> Option<usize> {
        self.tables.iter().position(|&t| t == table)
    }
}

enum Compiled<'a> {
    Leaf { column: &'a Column, op: CompareOp, values: &'a [f64] },
    And(Vec<Compiled<'a>>),
    Or(Vec<Compiled<'a>>),
}

impl<'a> Compiled<'a> {
    fn new(p: &'a PredicateTree, table: &'a Table) -> Result<Self> {
        Ok(match p {
            PredicateTree::Leaf(l) => Compiled::Leaf { column: table.column(&l.column)?, op: l.op, values: &l.values },
            PredicateTree::And { children } => {
                Compiled::And(children.iter().map(|c| Compiled::new(c, table)).collect::<Result<_>>()?)
            }
            PredicateTree::Or { children } => {
                Compiled::Or(children.iter().map(|c| Compiled::new(c, table)).collect::<Result<_>>()?)
            }
        })
    }

    #[inline]
    fn leaf_match(column: &Column, op: CompareOp, values: &[f64], row: usize) -> bool {
        let Some(v) = column.value(row) else { return false };
        match op {
            CompareOp::Eq => v == values[0],
            CompareOp::Lt => v < values[0],
            CompareOp::Le => v <= values[0],
            CompareOp::Gt => v > values[0],
            CompareOp::Ge => v >= values[0],
            CompareOp::In => values.contains(&v),
        }
    }

    /// Short-circuit evaluation, counting leaf evaluations.
    fn eval(&self, row: usize, evals: &mut u64) -> bool {
        match self {
            Compiled::Leaf { column, op, values } => {
                *evals += 1;
                Self::leaf_match(column, *op, values, row)
            }
            Compiled::And(cs) => cs.iter().all(|c| c.eval(row, evals)),
            Compiled::Or(cs) => cs.iter().any(|c| c.eval(row, evals)),
        }
    }

    /// Full evaluation recording, in preorder, which nodes hold on `row`.
    fn eval_all(&self, row: usize, hits: &mut [u64], next: &mut usize) -> bool {
        let me = *next;
        *next += 1;
        let r = match self {
            Compiled::Leaf { column, op, values } => Self::leaf_match(column, *op, values, row),
            Compiled::And(cs) => cs.iter().fold(true, |acc, c| c.eval_all(row, hits, next) & acc),
            Compiled::Or(cs) => cs.iter().fold(false, |acc, c| c.eval_all(row, hits, next) | acc),
        };
        if r {
            hits[me] += 1;
        }
        r
    }
}

fn true_selectivities(roots: &[Compiled<'_>], table: &Table, nodes: usize) -> Vec<f64> {
    if nodes == 0 {
        return Vec::new();
    }
    let mut hits = vec![0u64; nodes];
    for row in 0..table.row_count {
        let mut next = 0;
        for r in roots {
            r.eval_all(row, &mut hits, &mut next);
        }
    }
    let n = table.row_count.max(1) as f64;
    hits.into_iter().map(|h| h as f64 / n).collect()
}

const HASH_MULTIPLIER: u64 = 0x9E37_79B9_7F4A_7C15;
const EMPTY: u32 = u32::MAX;

/// Open-chaining hash table with multiplicative hashing.
struct ChainedHash {
    shift: u32,
    heads: Vec<u32>,
    next: Vec<u32>,
    keys: Vec<i64>,
}

impl ChainedHash {
    fn with_capacity(n: usize) -> Self {
        let buckets = n.max(1).next_power_of_two();
        let bits = buckets.trailing_zeros();
        ChainedHash { shift: 64 - bits, heads: vec![EMPTY; buckets], next: Vec::with_capacity(n), keys: Vec::with_capacity(n) }
    }

    #[inline]
    fn bucket(&self, key: i64) -> usize {
        if self.shift == 64 {
            0
        } else {
            ((key as u64).wrapping_mul(HASH_MULTIPLIER) >> self.shift) as usize
        }
    }

    fn insert(&mut self, key: i64) {
        let b = self.bucket(key);
        let id = self.keys.len() as u32;
        self.keys.push(key);
        self.next.push(self.heads[b]);
        self.heads[b] = id;
    }
}

fn table_index(db: &Database, name: &str) -> Result<usize> {
    db.tables.iter().position(|t| t.name == name).ok_or_else(|| Error::UnknownTable(name.to_string()))
}

fn scan_result(t: usize, rows: Vec<u32>) -> Rel {
    Rel { tables: vec![t], rows: vec![rows] }
}

fn aggregate(rel: &Rel, db: &Database, aggs: &[Aggregate], counters: &mut OpCounters) -> Result<Vec<Option<f64>>> {
    let n = rel.len();
    let mut out = Vec::with_capacity(aggs.len());
    for a in aggs {
        counters.aggregate_updates += n as u64;
        let value = match (&a.func, &a.column) {
            (AggFunc::Count, _) => Some(n as f64),
            (func, Some(c)) => {
                let t = table_index(db, &c.table)?;
                let slot = rel.slot(t).ok_or_else(|| Error::Execution(format!("aggregate over unjoined `{}`", c.table)))?;
                let column = db.tables[t].column(&c.column)?;
                let mut acc: Option<f64> = None;
                let mut count = 0u64;
                for &row in &rel.rows[slot] {
                    let Some(v) = column.value(row as usize) else { continue };
                    count += 1;
                    acc = Some(match (acc, func) {
                        (None, _) => v,
                        (Some(s), AggFunc::Sum | AggFunc::Avg) => s + v,
                        (Some(s), AggFunc::Min) => s.min(v),
                        (Some(s), AggFunc::Max) => s.max(v),
                        (Some(_), AggFunc::Count) => unreachable!(),
                    });
                }
                match func {
                    AggFunc::Avg => acc.map(|s| s / count as f64),
                    _ => acc,
                }
            }
            (_, None) => return Err(Error::Execution(format!("{} without a column", a.func.sql()))),
        };
        out.push(value);
    }
    Ok(out)
}

/// Runs `plan` over `db`. Refuses plans that reference indexes the
/// database has not materialized.
pub fn execute(plan: &PhysicalPlan, db: &Database, weights: &CostWeights) -> Result<ExecResult> {
    execute_with(plan, db, weights, false)
}

pub fn execute_with(plan: &PhysicalPlan, db: &Database, weights: &CostWeights, wall_clock: bool) -> Result<ExecResult> {
    plan.check_shape()?;
    for (def, hypothetical) in plan.used_indexes() {
        if !db.has_index(def) {
            return Err(Error::Execution(if hypothetical {
                format!("hypothetical index on {}.{} is not materialized", def.table, def.column)
            } else {
                format!("missing index on {}.{}", def.table, def.column)
            }));
        }
    }
    let started = wall_clock.then(std::time::Instant::now);
    let mut rels: Vec<Option<Rel>> = (0..plan.nodes.len()).map(|_| None).collect();
    let mut ops = Vec::with_capacity(plan.nodes.len());
    let mut values = Vec::new();

    for (id, node) in plan.nodes.iter().enumerate() {
        let mut c = OpCounters::default();
        let mut selectivities = Vec::new();
        let mut price_rows = 0u64;
        let (actual_in, rel) = match &node.op {
            PhysicalOp::SeqScan { table, filter } => {
                let ti = table_index(db, table)?;
                let t = &db.tables[ti];
                let pages = crate::relcore::table_page_count(t);
                c.pages = pages;
                c.tuples_scanned = t.row_count as u64;
                let compiled = filter.as_ref().map(|p| Compiled::new(p, t)).transpose()?;
                let rows: Vec<u32> = match &compiled {
                    None => (0..t.row_count as u32).collect(),
                    Some(p) => (0..t.row_count).filter(|&r| p.eval(r, &mut c.leaf_evals)).map(|r| r as u32).collect(),
                };
                if let Some(p) = compiled {
                    selectivities = true_selectivities(std::slice::from_ref(&p), t, node.op.predicate_node_count());
                }
                (t.row_count as u64, scan_result(ti, rows))
            }
            PhysicalOp::IndexScan { table, index, probe, residual, .. } => {
                let ti = table_index(db, table)?;
                let t = &db.tables[ti];
                let idx = db
                    .index(&index.table, &index.column)
                    .ok_or_else(|| Error::Execution(format!("missing index on {}.{}", index.table, index.column)))?;
                let PredicateTree::Leaf(leaf) = probe else {
                    return Err(Error::Execution("index probe must be a single leaf".into()));
                };
                if leaf.op != CompareOp::Eq || leaf.column != index.column {
                    return Err(Error::Execution("index probe must be an equality on the indexed column".into()));
                }
                price_rows = t.row_count as u64;
                c.index_probes = 1;
                let hits = idx.lookup(leaf.values[0]);
                c.index_fetches = hits.len() as u64;
                let compiled = residual.as_ref().map(|p| Compiled::new(p, t)).transpose()?;
                let rows: Vec<u32> = match &compiled {
                    None => hits.to_vec(),
                    Some(p) => hits.iter().copied().filter(|&r| p.eval(r as usize, &mut c.leaf_evals)).collect(),
                };
                let mut roots = vec![Compiled::new(probe, t)?];
                roots.extend(compiled);
                selectivities = true_selectivities(&roots, t, node.op.predicate_node_count());
                (hits.len() as u64, scan_result(ti, rows))
            }
            PhysicalOp::HashJoin { build_key, probe_key, .. } => {
                let build = rels[node.children[0]].take().expect("children execute first");
                let probe = rels[node.children[1]].take().expect("children execute first");
                let bt = table_index(db, &build_key.table)?;
                let pt = table_index(db, &probe_key.table)?;
                let bslot = build.slot(bt).ok_or_else(|| Error::Execution("build key outside build input".into()))?;
                let pslot = probe.slot(pt).ok_or_else(|| Error::Execution("probe key outside probe input".into()))?;
                let bcol = db.tables[bt].column(&build_key.column)?;
                let pcol = db.tables[pt].column(&probe_key.column)?;

                let mut ht = ChainedHash::with_capacity(build.len());
                let mut build_pos = Vec::with_capacity(build.len());
                for (i, &row) in build.rows[bslot].iter().enumerate() {
                    if let Some(k) = bcol.key(row as usize) {
                        ht.insert(k);
                        build_pos.push(i as u32);
                        c.hash_inserts += 1;
                    }
                }
                let width = build.tables.len() + probe.tables.len();
                let mut out: Vec<Vec<u32>> = vec![Vec::new(); width];
                for (j, &row) in probe.rows[pslot].iter().enumerate() {
                    c.hash_probes += 1;
                    let Some(k) = pcol.key(row as usize) else { continue };
                    let mut e = ht.heads[ht.bucket(k)];
                    while e != EMPTY {
                        if ht.keys[e as usize] == k {
                            c.matches += 1;
                            let bi = build_pos[e as usize] as usize;
                            for (s, col) in build.rows.iter().enumerate() {
                                out[s].push(col[bi]);
                            }
                            for (s, col) in probe.rows.iter().enumerate() {
                                out[build.tables.len() + s].push(col[j]);
                            }
                        } else {
                            c.chain_collisions += 1;
                        }
                        e = ht.next[e as usize];
                    }
                }
                let mut tables = build.tables.clone();
                tables.extend(&probe.tables);
                ((build.len() + probe.len()) as u64, Rel { tables, rows: out })
            }
            PhysicalOp::Aggregate { aggregates } => {
                let input = rels[node.children[0]].take().expect("children execute first");
                values = aggregate(&input, db, aggregates, &mut c)?;
                (input.len() as u64, Rel { tables: Vec::new(), rows: vec![vec![0]] })
            }
        };
        let actual_out = rel.len() as u64;
        let cost_units = c.cost(weights, price_rows);
        ops.push(OpExec { actual_in, actual_out, counters: c, cost_units, selectivities });
        rels[id] = Some(rel);
    }
    let cost_units = ops.iter().map(|o| o.cost_units).sum();
    let wall_time_ms = started.map(|s| s.elapsed().as_secs_f64() * 1e3);
    Ok(ExecResult { values, ops, cost_units, wall_time_ms })
}

/// Writes actual cardinalities and selectivities into the plan's annotations.
pub fn annotate_actuals(plan: &mut PhysicalPlan, exec: &ExecResult) -> Result<()> {
    if exec.ops.len() != plan.nodes.len() {
        return Err(Error::Execution("execution result does not match plan".into()));
    }
    for (node, op) in plan.nodes.iter_mut().zip(&exec.ops) {
        node.annotation.actual_in = Some(op.actual_in);
        node.annotation.actual_out = Some(op.actual_out);
        node.annotation.actual_selectivity = Some(op.selectivities.clone());
    }
    Ok(())
}

#[cfg(test)]
mod tests;
