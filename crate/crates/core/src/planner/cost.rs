use super::{PhysicalOp, PhysicalPlan};
use crate::relcore::Catalog;
use crate::{Error, Result};

/// Textbook cost of one operator from its estimated cardinalities.
pub fn op_analytic_cost(plan: &PhysicalPlan, id: usize, catalog: &Catalog) -> Result<f64> {
    let node = &plan.nodes[id];
    let missing = || Error::Plan(format!("node {id} lacks cardinality estimates"));
    let out = node.annotation.estimated_out.ok_or_else(missing)?;
    let input = node.annotation.estimated_in.ok_or_else(missing)?;
    let child_out = |i: usize| plan.nodes[node.children[i]].annotation.estimated_out.ok_or_else(missing);
    Ok(match &node.op {
        PhysicalOp::SeqScan { table, .. } => {
            let t = catalog.table(table)?;
            t.page_count as f64 + 0.01 * t.row_count as f64
        }
        PhysicalOp::IndexScan { table, .. } => {
            let rows = catalog.table(table)?.row_count.max(1) as f64;
            rows.log2() + input * 1.01
        }
        PhysicalOp::HashJoin { .. } => 1.5 * child_out(0)? + child_out(1)? + 0.1 * out,
        PhysicalOp::Aggregate { .. } => 0.05 * input,
    })
}

/// Fills per-operator analytic costs.
pub fn annotate_analytic_cost(plan: &mut PhysicalPlan, catalog: &Catalog) -> Result<()> {
    for id in 0..plan.nodes.len() {
        let c = op_analytic_cost(plan, id, catalog)?;
        plan.nodes[id].annotation.analytic_cost = Some(c);
    }
    Ok(())
}

/// Sum of per-operator analytic costs, the optimizer-cost analogue used by
/// the scaled-cost baseline.
pub fn analytic_cost(plan: &PhysicalPlan, catalog: &Catalog) -> Result<f64> {
    (0..plan.nodes.len()).map(|id| op_analytic_cost(plan, id, catalog)).sum()
}
