//! Histogram-based selectivity and cardinality estimation.
//!
//! Predicate leaves read the column's equi-depth histogram; conjunctions
//! and disjunctions combine leaf estimates assuming independence. Joins
//! assume foreign-key containment: every child row finds its parent.

use crate::executor::ExecResult;
use crate::planner::{PhysicalOp, PhysicalPlan};
use crate::relcore::{Catalog, ColumnStats, Histogram};
use crate::workload::{CompareOp, Leaf, PredicateTree};
use crate::{Error, Result};

fn eq_rows(h: &Histogram, v: f64) -> f64 {
    match h.bucket_of(v) {
        Some(b) if h.ndv[b] > 0 => h.counts[b] as f64 / h.ndv[b] as f64,
        _ => 0.0,
    }
}

/// Estimated number of non-null values `<= v`.
fn le_rows(h: &Histogram, v: f64) -> f64 {
    let total = h.total() as f64;
    if total == 0.0 || v < h.min() {
        return 0.0;
    }
    if v >= h.max() {
        return total;
    }
    let b = h.bucket_of(v).expect("v within [min, max]");
    let below: u64 = h.counts[..b].iter().sum();
    let (lo, hi) = (h.bounds[b], h.bounds[b + 1]);
    let frac = if hi > lo { (v - lo) / (hi - lo) } else { 1.0 };
    let interpolated = below as f64 + h.counts[b] as f64 * frac;
    interpolated.max(below as f64 + eq_rows(h, v)).min(total)
}

/// Selectivity of one predicate leaf relative to the table's row count.
pub fn leaf_selectivity(leaf: &Leaf, stats: &ColumnStats, row_count: u64) -> f64 {
    if row_count == 0 {
        return 0.0;
    }
    let h = &stats.histogram;
    let total = h.total() as f64;
    let lit = leaf.values[0];
    let rows = match leaf.op {
        CompareOp::Eq => eq_rows(h, lit),
        CompareOp::In => {
            let mut seen: Vec<f64> = Vec::new();
            let mut acc = 0.0;
            for &v in &leaf.values {
                if !seen.contains(&v) {
                    seen.push(v);
                    acc += eq_rows(h, v);
                }
            }
            acc.min(total)
        }
        CompareOp::Le => le_rows(h, lit),
        CompareOp::Lt => (le_rows(h, lit) - eq_rows(h, lit)).max(0.0),
        CompareOp::Gt => total - le_rows(h, lit),
        CompareOp::Ge => total - (le_rows(h, lit) - eq_rows(h, lit)).max(0.0),
    };
    (rows / row_count as f64).clamp(0.0, 1.0)
}

/// Estimated selectivity of a predicate tree over `table`.
pub fn estimate_selectivity(pred: &PredicateTree, table: &str, catalog: &Catalog) -> Result<f64> {
    let stats = catalog.table(table)?;
    fn walk(p: &PredicateTree, stats: &crate::relcore::TableStats) -> Result<f64> {
        Ok(match p {
            PredicateTree::Leaf(l) => leaf_selectivity(l, stats.column(&l.column)?, stats.row_count),
            PredicateTree::And { children } => {
                let mut s = 1.0;
                for c in children {
                    s *= walk(c, stats)?;
                }
                s
            }
            PredicateTree::Or { children } => {
                let mut miss = 1.0;
                for c in children {
                    miss *= 1.0 - walk(c, stats)?;
                }
                1.0 - miss
            }
        }
        .clamp(0.0, 1.0))
    }
    walk(pred, stats)
}

/// Estimated selectivity of every predicate node of a scan, in preorder
/// over the scan's predicate roots.
pub fn predicate_node_selectivities(op: &PhysicalOp, catalog: &Catalog) -> Result<Vec<f64>> {
    let Some(table) = op.scan_table() else { return Ok(Vec::new()) };
    let mut out = Vec::new();
    for root in op.predicate_roots() {
        for node in root.preorder() {
            out.push(estimate_selectivity(node, table, catalog)?);
        }
    }
    Ok(out)
}

/// `|S ⋈ T|` for a key/foreign-key edge whose key side has `parent_rows` rows.
pub fn join_estimate(left: f64, right: f64, parent_rows: u64) -> f64 {
    if parent_rows == 0 {
        0.0
    } else {
        left * right / parent_rows as f64
    }
}

/// Fills estimated input/output cardinalities and predicate selectivities.
pub fn estimate_plan_cardinalities(plan: &mut PhysicalPlan, catalog: &Catalog) -> Result<()> {
    for id in 0..plan.nodes.len() {
        let node = &plan.nodes[id];
        let child_out = |i: usize| -> f64 { plan.nodes[node.children[i]].annotation.estimated_out.expect("children first") };
        let (input, output, sel) = match &node.op {
            PhysicalOp::SeqScan { table, filter } => {
                let rows = catalog.table(table)?.row_count as f64;
                let s = match filter {
                    Some(p) => estimate_selectivity(p, table, catalog)?,
                    None => 1.0,
                };
                (rows, rows * s, predicate_node_selectivities(&node.op, catalog)?)
            }
            PhysicalOp::IndexScan { table, probe, residual, .. } => {
                let rows = catalog.table(table)?.row_count as f64;
                let ps = estimate_selectivity(probe, table, catalog)?;
                let rs = match residual {
                    Some(p) => estimate_selectivity(p, table, catalog)?,
                    None => 1.0,
                };
                (rows * ps, rows * ps * rs, predicate_node_selectivities(&node.op, catalog)?)
            }
            PhysicalOp::HashJoin { parent_table, .. } => {
                let (b, p) = (child_out(0), child_out(1));
                (b + p, join_estimate(b, p, catalog.table(parent_table)?.row_count), Vec::new())
            }
            PhysicalOp::Aggregate { .. } => (child_out(0), 1.0, Vec::new()),
        };
        let a = &mut plan.nodes[id].annotation;
        a.estimated_in = Some(input);
        a.estimated_out = Some(output);
        a.estimated_selectivity = Some(sel);
    }
    Ok(())
}

/// Copy of `plan` whose estimate slots hold the executor's actual values.
pub fn exact_cardinalities(plan: &PhysicalPlan, exec: Option<&ExecResult>) -> Result<PhysicalPlan> {
    let exec = exec.ok_or_else(|| Error::Plan("exact cardinalities need an execution result".into()))?;
    if exec.ops.len() != plan.nodes.len() {
        return Err(Error::Plan("execution result does not match plan".into()));
    }
    let mut out = plan.clone();
    for (node, op) in out.nodes.iter_mut().zip(&exec.ops) {
        let a = &mut node.annotation;
        a.actual_in = Some(op.actual_in);
        a.actual_out = Some(op.actual_out);
        a.actual_selectivity = Some(op.selectivities.clone());
        a.estimated_in = Some(op.actual_in as f64);
        a.estimated_out = Some(op.actual_out as f64);
        a.estimated_selectivity = Some(op.selectivities.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relcore::{Column, ColumnData, ColumnRole, Database, Table, compute_statistics};

    fn catalog_of(values: Vec<i64>) -> Catalog {
        let n = values.len();
        let db = Database {
            name: "d".into(),
            seed: 0,
            tables: vec![Table {
                name: "t".into(),
                row_count: n,
                columns: vec![Column { name: "a".into(), role: ColumnRole::Attribute, data: ColumnData::Int(values), nulls: None }],
            }],
            foreign_keys: vec![],
            indexes: vec![],
        };
        compute_statistics(&db, 32)
    }

    fn leaf(op: CompareOp, v: f64) -> PredicateTree {
        PredicateTree::Leaf(Leaf { column: "a".into(), op, values: vec![v] })
    }

    #[test]
    fn uniform_equality_is_one_over_ndv() {
        let cat = catalog_of((0..10_000).map(|i| i % 100).collect());
        let s = estimate_selectivity(&leaf(CompareOp::Eq, 37.0), "t", &cat).unwrap();
        assert!((s - 0.01).abs() < 1e-12, "{s}");
    }

    #[test]
    fn full_range_is_one() {
        let cat = catalog_of((1..=500).collect());
        assert_eq!(estimate_selectivity(&leaf(CompareOp::Ge, 1.0), "t", &cat).unwrap(), 1.0);
        assert_eq!(estimate_selectivity(&leaf(CompareOp::Le, 500.0), "t", &cat).unwrap(), 1.0);
        assert_eq!(estimate_selectivity(&leaf(CompareOp::Lt, 1.0), "t", &cat).unwrap(), 0.0);
        assert_eq!(estimate_selectivity(&leaf(CompareOp::Gt, 500.0), "t", &cat).unwrap(), 0.0);
        assert_eq!(estimate_selectivity(&leaf(CompareOp::Eq, 9999.0), "t", &cat).unwrap(), 0.0);
    }

    #[test]
    fn range_interpolation_tracks_truth_on_uniform_data() {
        let cat = catalog_of((0..1000).collect());
        for c in [10.0, 250.0, 501.0, 999.0] {
            let s = estimate_selectivity(&leaf(CompareOp::Lt, c), "t", &cat).unwrap();
            let truth = c / 1000.0;
            assert!((s - truth).abs() < 0.01, "{c}: {s} vs {truth}");
        }
    }

    #[test]
    fn connectives_assume_independence() {
        let cat = catalog_of((0..1000).collect());
        let a = leaf(CompareOp::Lt, 500.0);
        let b = leaf(CompareOp::Ge, 800.0);
        let sa = estimate_selectivity(&a, "t", &cat).unwrap();
        let sb = estimate_selectivity(&b, "t", &cat).unwrap();
        let and = estimate_selectivity(&PredicateTree::And { children: vec![a.clone(), b.clone()] }, "t", &cat).unwrap();
        let or = estimate_selectivity(&PredicateTree::Or { children: vec![a, b] }, "t", &cat).unwrap();
        assert!((and - sa * sb).abs() < 1e-12);
        assert!((or - (sa + sb - sa * sb)).abs() < 1e-12);
    }

    #[test]
    fn unknown_column_errors() {
        let cat = catalog_of(vec![1, 2, 3]);
        let p = PredicateTree::Leaf(Leaf { column: "zz".into(), op: CompareOp::Eq, values: vec![1.0] });
        assert!(matches!(estimate_selectivity(&p, "t", &cat), Err(Error::UnknownColumn { .. })));
    }
}
