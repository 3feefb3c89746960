//! Physical planning: scan selection, greedy join ordering, analytic cost
//! and What-If plans over hypothetical indexes.

mod cost;

pub use cost::{analytic_cost, annotate_analytic_cost, op_analytic_cost};

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cardest;
use crate::relcore::{Catalog, IndexDef};
use crate::workload::{Aggregate, ColumnRef, CompareOp, PredicateTree, QuerySpec};
use crate::{Error, Result};

pub const PLAN_FORMAT: &str = "plan_v1";

/// Equality leaves on indexed columns below this estimated selectivity use an index scan.
pub const INDEX_SCAN_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PhysicalOp {
    SeqScan {
        table: String,
        filter: Option<PredicateTree>,
    },
    IndexScan {
        table: String,
        index: IndexDef,
        /// Always a single equality leaf.
        probe: PredicateTree,
        residual: Option<PredicateTree>,
        /// The index does not exist yet; it was assumed for a What-If plan.
        hypothetical: bool,
    },
    /// Children are `[build, probe]`.
    HashJoin {
        build_key: ColumnRef,
        probe_key: ColumnRef,
        /// Table whose key column the join matches against.
        parent_table: String,
    },
    Aggregate {
        aggregates: Vec<Aggregate>,
    },
}

impl PhysicalOp {
    pub fn kind_index(&self) -> usize {
        match self {
            PhysicalOp::SeqScan { .. } => 0,
            PhysicalOp::IndexScan { .. } => 1,
            PhysicalOp::HashJoin { .. } => 2,
            PhysicalOp::Aggregate { .. } => 3,
        }
    }

    pub fn name(&self) -> &'static str {
        ["SeqScan", "IndexScan", "HashJoin", "Aggregate"][self.kind_index()]
    }

    pub fn scan_table(&self) -> Option<&str> {
        match self {
            PhysicalOp::SeqScan { table, .. } | PhysicalOp::IndexScan { table, .. } => Some(table),
            _ => None,
        }
    }

    /// Predicate trees evaluated by a scan, in annotation order
    /// (probe before residual).
    pub fn predicate_roots(&self) -> Vec<&PredicateTree> {
        match self {
            PhysicalOp::SeqScan { filter, .. } => filter.iter().collect(),
            PhysicalOp::IndexScan { probe, residual, .. } => std::iter::once(probe).chain(residual.iter()).collect(),
            _ => Vec::new(),
        }
    }

    /// Number of predicate nodes (preorder over [`Self::predicate_roots`]).
    pub fn predicate_node_count(&self) -> usize {
        self.predicate_roots().iter().map(|r| r.preorder().len()).sum()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanAnnotation {
    pub estimated_in: Option<f64>,
    pub estimated_out: Option<f64>,
    /// Per predicate node of a scan, preorder over its predicate roots.
    pub estimated_selectivity: Option<Vec<f64>>,
    pub analytic_cost: Option<f64>,
    pub actual_in: Option<u64>,
    pub actual_out: Option<u64>,
    pub actual_selectivity: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanNode {
    pub op: PhysicalOp,
    pub children: Vec<usize>,
    pub annotation: PlanAnnotation,
}

/// Operator tree stored as an arena. Children precede parents; the root
/// (always an `Aggregate`) is the last node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalPlan {
    pub format: String,
    pub query_id: u64,
    pub nodes: Vec<PlanNode>,
    pub root: usize,
    pub hypothetical: bool,
}

impl PhysicalPlan {
    pub fn root_node(&self) -> &PlanNode {
        &self.nodes[self.root]
    }

    /// Tables produced by the subtree rooted at `id`, sorted.
    pub fn subtree_tables(&self, id: usize) -> Vec<String> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            if let Some(t) = self.nodes[n].op.scan_table() {
                out.push(t.to_string());
            }
            stack.extend(&self.nodes[n].children);
        }
        out.sort();
        out
    }

    /// Index definitions referenced by index scans.
    pub fn used_indexes(&self) -> Vec<(&IndexDef, bool)> {
        self.nodes
            .iter()
            .filter_map(|n| match &n.op {
                PhysicalOp::IndexScan { index, hypothetical, .. } => Some((index, *hypothetical)),
                _ => None,
            })
            .collect()
    }

    /// Structural equality ignoring annotations and hypothetical markers.
    pub fn same_structure(&self, other: &PhysicalPlan) -> bool {
        fn strip(op: &PhysicalOp) -> PhysicalOp {
            let mut op = op.clone();
            if let PhysicalOp::IndexScan { hypothetical, .. } = &mut op {
                *hypothetical = false;
            }
            op
        }
        self.root == other.root
            && self.nodes.len() == other.nodes.len()
            && self
                .nodes
                .iter()
                .zip(&other.nodes)
                .all(|(a, b)| a.children == b.children && strip(&a.op) == strip(&b.op))
    }

    pub fn check_shape(&self) -> Result<()> {
        if self.format != PLAN_FORMAT {
            return Err(Error::Plan(format!("unsupported plan format `{}`", self.format)));
        }
        if self.nodes.is_empty() || self.root != self.nodes.len() - 1 {
            return Err(Error::Plan("root must be the last node".into()));
        }
        if !matches!(self.nodes[self.root].op, PhysicalOp::Aggregate { .. }) {
            return Err(Error::Plan("root must be an aggregate".into()));
        }
        let mut parents = vec![0usize; self.nodes.len()];
        for (i, n) in self.nodes.iter().enumerate() {
            let arity = match n.op {
                PhysicalOp::SeqScan { .. } | PhysicalOp::IndexScan { .. } => 0,
                PhysicalOp::HashJoin { .. } => 2,
                PhysicalOp::Aggregate { .. } => 1,
            };
            if n.children.len() != arity {
                return Err(Error::Plan(format!("node {i} has {} children, expected {arity}", n.children.len())));
            }
            for &c in &n.children {
                if c >= i {
                    return Err(Error::Plan(format!("node {i} references later node {c}")));
                }
                parents[c] += 1;
            }
        }
        if parents[..self.root].iter().any(|&p| p != 1) {
            return Err(Error::Plan("plan is not a tree".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<PhysicalPlan> {
        let p: PhysicalPlan = serde_json::from_str(text)?;
        p.check_shape()?;
        Ok(p)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }
}

struct ScanChoice {
    op: PhysicalOp,
    est_rows: f64,
}

fn choose_scan(
    table: &str,
    filter: Option<&PredicateTree>,
    catalog: &Catalog,
    existing: &[IndexDef],
    hypothetical: &[IndexDef],
) -> Result<ScanChoice> {
    let stats = catalog.table(table)?;
    let sel = match filter {
        Some(p) => cardest::estimate_selectivity(p, table, catalog)?,
        None => 1.0,
    };
    let est_rows = stats.row_count as f64 * sel;
    let mut best: Option<(f64, usize, IndexDef, bool)> = None;
    if let Some(pred) = filter {
        for (pos, conj) in pred.conjuncts().into_iter().enumerate() {
            let PredicateTree::Leaf(leaf) = conj else { continue };
            if leaf.op != CompareOp::Eq {
                continue;
            }
            let find = |set: &[IndexDef]| set.iter().find(|d| d.table == table && d.column == leaf.column).cloned();
            let (def, hypo) = match (find(existing), find(hypothetical)) {
                (Some(d), _) => (d, false),
                (None, Some(d)) => (d, true),
                (None, None) => continue,
            };
            let s = cardest::leaf_selectivity(leaf, stats.column(&leaf.column)?, stats.row_count);
            if s >= INDEX_SCAN_THRESHOLD {
                continue;
            }
            // ties keep the earlier conjunct
            if best.as_ref().is_none_or(|(bs, _, _, _)| s < *bs) {
                best = Some((s, pos, def, hypo));
            }
        }
    }
    let op = match (best, filter) {
        (Some((_, pos, index, hypothetical)), Some(pred)) => {
            let conj = pred.conjuncts();
            let probe = conj[pos].clone();
            let rest: Vec<PredicateTree> =
                conj.iter().enumerate().filter(|(i, _)| *i != pos).map(|(_, p)| (*p).clone()).collect();
            PhysicalOp::IndexScan {
                table: table.to_string(),
                index,
                probe,
                residual: PredicateTree::conjunction(rest),
                hypothetical,
            }
        }
        _ => PhysicalOp::SeqScan { table: table.to_string(), filter: filter.cloned() },
    };
    Ok(ScanChoice { op, est_rows })
}

fn build_plan(q: &QuerySpec, catalog: &Catalog, existing: &[IndexDef], hypothetical: &[IndexDef]) -> Result<PhysicalPlan> {
    q.validate()?;
    let mut scans = Vec::with_capacity(q.tables.len());
    for t in &q.tables {
        scans.push(choose_scan(t, q.filter(t), catalog, existing, hypothetical)?);
    }
    let mut nodes: Vec<PlanNode> = Vec::new();
    let push = |nodes: &mut Vec<PlanNode>, op: PhysicalOp, children: Vec<usize>| {
        nodes.push(PlanNode { op, children, annotation: PlanAnnotation::default() });
        nodes.len() - 1
    };

    // greedy: smallest filtered table first; ties go to the earlier table
    // of the query so that renaming cannot change the plan
    let start = (0..q.tables.len())
        .min_by(|&a, &b| scans[a].est_rows.total_cmp(&scans[b].est_rows).then(a.cmp(&b)))
        .expect("at least one table");
    let mut joined = vec![false; q.tables.len()];
    joined[start] = true;
    let mut current = push(&mut nodes, scans[start].op.clone(), vec![]);
    let mut current_card = scans[start].est_rows;
    let pos = |t: &str| q.tables.iter().position(|x| x == t).expect("validated join");

    for _ in 1..q.tables.len() {
        let mut best: Option<(f64, usize, &crate::relcore::ForeignKey)> = None;
        for fk in &q.joins {
            let (c, p) = (pos(&fk.child_table), pos(&fk.parent_table));
            let new = match (joined[c], joined[p]) {
                (true, false) => p,
                (false, true) => c,
                _ => continue,
            };
            let est = cardest::join_estimate(current_card, scans[new].est_rows, catalog.table(&fk.parent_table)?.row_count);
            let better = match &best {
                None => true,
                Some((be, bn, _)) => est.total_cmp(be).then(new.cmp(bn)).is_lt(),
            };
            if better {
                best = Some((est, new, fk));
            }
        }
        let (est, new, fk) = best.ok_or_else(|| Error::Plan("join graph disconnected".into()))?;
        joined[new] = true;
        let right = push(&mut nodes, scans[new].op.clone(), vec![]);
        let new_is_child = q.tables[new] == fk.child_table;
        let (left_key, right_key) = if new_is_child {
            (ColumnRef::new(&fk.parent_table, &fk.parent_column), ColumnRef::new(&fk.child_table, &fk.child_column))
        } else {
            (ColumnRef::new(&fk.child_table, &fk.child_column), ColumnRef::new(&fk.parent_table, &fk.parent_column))
        };
        // smaller estimated input builds; tie keeps the left operand
        let (build, probe, build_key, probe_key) = if scans[new].est_rows < current_card {
            (right, current, right_key, left_key)
        } else {
            (current, right, left_key, right_key)
        };
        current = push(
            &mut nodes,
            PhysicalOp::HashJoin { build_key, probe_key, parent_table: fk.parent_table.clone() },
            vec![build, probe],
        );
        current_card = est;
    }
    let root = push(&mut nodes, PhysicalOp::Aggregate { aggregates: q.aggregates.clone() }, vec![current]);
    let mut plan = PhysicalPlan { format: PLAN_FORMAT.to_string(), query_id: q.id, nodes, root, hypothetical: false };
    plan.hypothetical = plan.used_indexes().iter().any(|(_, h)| *h);
    cardest::estimate_plan_cardinalities(&mut plan, catalog)?;
    annotate_analytic_cost(&mut plan, catalog)?;
    Ok(plan)
}

/// Plans `q` using only the given (materialized) indexes.
pub fn plan(q: &QuerySpec, catalog: &Catalog, indexes: &[IndexDef]) -> Result<PhysicalPlan> {
    build_plan(q, catalog, indexes, &[])
}

/// Plans `q` as if `hypothetical` indexes existed in addition to `existing`.
/// Index scans over assumed indexes are marked, and the executor refuses
/// the plan until they are materialized.
pub fn hypothetical_plan(
    q: &QuerySpec,
    catalog: &Catalog,
    existing: &[IndexDef],
    hypothetical: &[IndexDef],
) -> Result<PhysicalPlan> {
    for def in hypothetical {
        catalog.column(&def.table, &def.column)?;
    }
    build_plan(q, catalog, existing, hypothetical)
}
