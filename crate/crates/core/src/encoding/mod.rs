//! Query graphs with transferable features.
//!
//! A plan becomes a DAG of five node types whose features are defined the
//! same way on every database: cardinalities, selectivities, datatypes and
//! table sizes, never names. Edges point from inputs towards the root.

mod onehot;

pub use onehot::{encode_onehot_ablation, OneHotRegistry};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::planner::{PhysicalOp, PhysicalPlan, PlanAnnotation};
use crate::relcore::{Catalog, DataType};
use crate::workload::{AggFunc, CompareOp, PredicateTree};
use crate::{Error, Result};

pub const GRAPH_FORMAT: &str = "graph_v1";
pub const FEATURE_SCHEMA: &str = "features_v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeType {
    PlanOp,
    Table,
    Column,
    Predicate,
    Aggregation,
}

impl NodeType {
    pub const ALL: [NodeType; 5] = [NodeType::PlanOp, NodeType::Table, NodeType::Column, NodeType::Predicate, NodeType::Aggregation];
    pub const COUNT: usize = 5;

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Feature widths per node type, in `NodeType::ALL` order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub name: String,
    pub dims: [usize; NodeType::COUNT],
}

pub const PLAN_OP_DIM: usize = 6;
pub const TABLE_DIM: usize = 2;
pub const COLUMN_DIM: usize = 6;
pub const PREDICATE_DIM: usize = 10;
pub const AGGREGATION_DIM: usize = 5;

impl FeatureSchema {
    pub fn transferable() -> Self {
        FeatureSchema {
            name: FEATURE_SCHEMA.to_string(),
            dims: [PLAN_OP_DIM, TABLE_DIM, COLUMN_DIM, PREDICATE_DIM, AGGREGATION_DIM],
        }
    }

    pub fn dim(&self, t: NodeType) -> usize {
        self.dims[t.index()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CardMode {
    /// Actual cardinalities observed by the executor.
    Exact,
    /// Histogram estimates from the catalog.
    Estimated,
}

impl std::str::FromStr for CardMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(CardMode::Exact),
            "estimated" => Ok(CardMode::Estimated),
            _ => Err(Error::Config(format!("unknown cardinality mode `{s}`"))),
        }
    }
}

impl std::fmt::Display for CardMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CardMode::Exact => "exact",
            CardMode::Estimated => "estimated",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: usize,
    pub kind: NodeType,
    pub features: Vec<f64>,
}

/// Nodes are numbered so that every edge goes from a lower to a higher id;
/// the root is the last node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryGraph {
    pub format: String,
    pub schema: FeatureSchema,
    pub nodes: Vec<GraphNode>,
    /// `(from, to)`: child to parent.
    pub edges: Vec<(usize, usize)>,
    pub root: usize,
}

impl QueryGraph {
    pub fn children(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.nodes.len()];
        for &(c, p) in &self.edges {
            out[p].push(c);
        }
        for list in &mut out {
            list.sort_unstable();
        }
        out
    }

    pub fn count(&self, kind: NodeType) -> usize {
        self.nodes.iter().filter(|n| n.kind == kind).count()
    }

    /// Acyclic, every node reaches the root, feature widths match the schema.
    pub fn validate(&self) -> Result<()> {
        let n = self.nodes.len();
        if self.root >= n {
            return Err(Error::Encoding("root out of range".into()));
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if node.id != i {
                return Err(Error::Encoding(format!("node {i} carries id {}", node.id)));
            }
            if node.features.len() != self.schema.dim(node.kind) {
                return Err(Error::Encoding(format!("node {i} has {} features", node.features.len())));
            }
            if node.features.iter().any(|f| !f.is_finite()) {
                return Err(Error::Encoding(format!("node {i} has a non-finite feature")));
            }
        }
        let mut out_degree = vec![0usize; n];
        for &(c, p) in &self.edges {
            if c >= n || p >= n || c == p {
                return Err(Error::Encoding(format!("bad edge {c} -> {p}")));
            }
            out_degree[c] += 1;
        }
        if out_degree[self.root] != 0 {
            return Err(Error::Encoding("root has an outgoing edge".into()));
        }
        topological_order(self)?;
        let mut reaches = vec![false; n];
        reaches[self.root] = true;
        let mut parents = vec![Vec::new(); n];
        for &(c, p) in &self.edges {
            parents[p].push(c);
        }
        let mut stack = vec![self.root];
        while let Some(v) = stack.pop() {
            for &c in &parents[v] {
                if !reaches[c] {
                    reaches[c] = true;
                    stack.push(c);
                }
            }
        }
        if let Some(i) = reaches.iter().position(|r| !r) {
            return Err(Error::Encoding(format!("node {i} does not reach the root")));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<QueryGraph> {
        let g: QueryGraph = serde_json::from_str(text)?;
        if g.format != GRAPH_FORMAT {
            return Err(Error::Encoding(format!("unsupported graph format `{}`", g.format)));
        }
        g.validate()?;
        Ok(g)
    }
}

/// Children before parents; ready nodes are taken in ascending id.
pub fn topological_order(g: &QueryGraph) -> Result<Vec<usize>> {
    let n = g.nodes.len();
    let mut pending = vec![0usize; n];
    let mut parents = vec![Vec::new(); n];
    for &(c, p) in &g.edges {
        pending[p] += 1;
        parents[c].push(p);
    }
    let mut ready: std::collections::BinaryHeap<std::cmp::Reverse<usize>> =
        (0..n).filter(|&i| pending[i] == 0).map(std::cmp::Reverse).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(std::cmp::Reverse(v)) = ready.pop() {
        order.push(v);
        for &p in &parents[v] {
            pending[p] -= 1;
            if pending[p] == 0 {
                ready.push(std::cmp::Reverse(p));
            }
        }
    }
    if order.len() != n {
        return Err(Error::Encoding("graph has a cycle".into()));
    }
    Ok(order)
}

fn log_card(c: f64) -> f64 {
    (1.0 + c.max(1.0)).ln()
}

fn one_hot(len: usize, hot: usize) -> Vec<f64> {
    let mut v = vec![0.0; len];
    v[hot] = 1.0;
    v
}

fn cards(a: &PlanAnnotation, mode: CardMode, id: usize) -> Result<(f64, f64, Vec<f64>)> {
    let missing = || Error::Encoding(format!("plan node {id} lacks {mode} cardinalities"));
    match mode {
        CardMode::Exact => Ok((
            a.actual_in.ok_or_else(missing)? as f64,
            a.actual_out.ok_or_else(missing)? as f64,
            a.actual_selectivity.clone().ok_or_else(missing)?,
        )),
        CardMode::Estimated => Ok((
            a.estimated_in.ok_or_else(missing)?,
            a.estimated_out.ok_or_else(missing)?,
            a.estimated_selectivity.clone().ok_or_else(missing)?,
        )),
    }
}

pub fn plan_op_features(kind: usize, card_in: f64, card_out: f64) -> Vec<f64> {
    let mut f = one_hot(4, kind);
    f.push(log_card(card_in));
    f.push(log_card(card_out));
    f
}

pub fn predicate_features(node: &PredicateTree, selectivity: f64, table_rows: u64) -> Vec<f64> {
    let (slot, literals) = match node {
        PredicateTree::And { .. } => (0, 0),
        PredicateTree::Or { .. } => (1, 0),
        PredicateTree::Leaf(l) => match l.op {
            CompareOp::Eq => (2, 0),
            CompareOp::Lt => (3, 0),
            CompareOp::Le => (4, 0),
            CompareOp::Gt => (5, 0),
            CompareOp::Ge => (6, 0),
            CompareOp::In => (7, l.values.len()),
        },
    };
    let mut f = one_hot(8, slot);
    // at least one qualifying row, like every other cardinality feature
    let rows = table_rows.max(1) as f64;
    f.push(((selectivity.clamp(0.0, 1.0) * rows).max(1.0) / rows).ln());
    f.push(literals as f64 / 5.0);
    f
}

pub fn aggregation_features(func: AggFunc) -> Vec<f64> {
    let slot = AggFunc::ALL.iter().position(|f| *f == func).expect("closed set");
    one_hot(5, slot)
}

/// Source of Table and Column node features.
pub(crate) trait Identity {
    fn schema(&self) -> FeatureSchema;
    fn table(&self, catalog: &Catalog, table: &str) -> Result<Vec<f64>>;
    fn column(&self, catalog: &Catalog, table: &str, column: &str) -> Result<Vec<f64>>;
}

struct Statistics;

impl Identity for Statistics {
    fn schema(&self) -> FeatureSchema {
        FeatureSchema::transferable()
    }

    fn table(&self, catalog: &Catalog, table: &str) -> Result<Vec<f64>> {
        let t = catalog.table(table)?;
        Ok(vec![(1.0 + t.row_count as f64).ln(), (1.0 + t.page_count as f64).ln()])
    }

    fn column(&self, catalog: &Catalog, table: &str, column: &str) -> Result<Vec<f64>> {
        let c = catalog.column(table, column)?;
        let slot = DataType::ALL.iter().position(|d| *d == c.datatype).expect("closed set");
        let mut f = one_hot(3, slot);
        f.extend([(1.0 + c.ndv as f64).ln(), c.null_frac, c.width_bytes / 64.0]);
        Ok(f)
    }
}

struct Builder {
    schema: FeatureSchema,
    nodes: Vec<GraphNode>,
    edges: Vec<(usize, usize)>,
}

impl Builder {
    fn add(&mut self, kind: NodeType, features: Vec<f64>) -> usize {
        let id = self.nodes.len();
        debug_assert_eq!(features.len(), self.schema.dim(kind));
        self.nodes.push(GraphNode { id, kind, features });
        id
    }

    fn edge(&mut self, from: usize, to: usize) {
        self.edges.push((from, to));
    }
}

pub(crate) fn encode_with(plan: &PhysicalPlan, catalog: &Catalog, mode: CardMode, identity: &dyn Identity) -> Result<QueryGraph> {
    plan.check_shape()?;
    let mut b = Builder { schema: identity.schema(), nodes: Vec::new(), edges: Vec::new() };

    // one Column node per distinct referenced column, in order of first use
    let mut columns: BTreeMap<(String, String), usize> = BTreeMap::new();
    let mut column_node = |b: &mut Builder, table: &str, column: &str| -> Result<usize> {
        if let Some(&id) = columns.get(&(table.to_string(), column.to_string())) {
            return Ok(id);
        }
        let id = b.add(NodeType::Column, identity.column(catalog, table, column)?);
        columns.insert((table.to_string(), column.to_string()), id);
        Ok(id)
    };
    for node in &plan.nodes {
        if let Some(table) = node.op.scan_table() {
            for root in node.op.predicate_roots() {
                for leaf in root.leaves() {
                    column_node(&mut b, table, &leaf.column)?;
                }
            }
        }
        if let PhysicalOp::Aggregate { aggregates } = &node.op {
            for c in aggregates.iter().filter_map(|a| a.column.as_ref()) {
                column_node(&mut b, &c.table, &c.column)?;
            }
        }
    }

    let mut op_ids = vec![usize::MAX; plan.nodes.len()];
    for (i, node) in plan.nodes.iter().enumerate() {
        let (card_in, card_out, sels) = cards(&node.annotation, mode, i)?;
        let mut inputs: Vec<usize> = node.children.iter().map(|&c| op_ids[c]).collect();
        match &node.op {
            PhysicalOp::SeqScan { table, .. } | PhysicalOp::IndexScan { table, .. } => {
                let rows = catalog.table(table)?.row_count;
                let preds: Vec<&PredicateTree> = node.op.predicate_roots().into_iter().flat_map(|r| r.preorder()).collect();
                if preds.len() != sels.len() {
                    return Err(Error::Encoding(format!(
                        "plan node {i} has {} predicate nodes but {} selectivities",
                        preds.len(),
                        sels.len()
                    )));
                }
                let mut next = 0;
                for root in node.op.predicate_roots() {
                    inputs.push(encode_predicate(&mut b, root, table, rows, &sels, &mut next, &mut column_node)?);
                }
                let t = b.add(NodeType::Table, identity.table(catalog, table)?);
                inputs.insert(0, t);
            }
            PhysicalOp::HashJoin { .. } => {}
            PhysicalOp::Aggregate { aggregates } => {
                for a in aggregates {
                    let id = b.add(NodeType::Aggregation, aggregation_features(a.func));
                    if let Some(c) = &a.column {
                        let col = column_node(&mut b, &c.table, &c.column)?;
                        b.edge(col, id);
                    }
                    inputs.push(id);
                }
            }
        }
        let id = b.add(NodeType::PlanOp, plan_op_features(node.op.kind_index(), card_in, card_out));
        for input in inputs {
            b.edge(input, id);
        }
        op_ids[i] = id;
    }
    let root = op_ids[plan.root];
    let g = QueryGraph { format: GRAPH_FORMAT.to_string(), schema: b.schema, nodes: b.nodes, edges: b.edges, root };
    debug_assert!(g.validate().is_ok());
    Ok(g)
}

fn encode_predicate(
    b: &mut Builder,
    node: &PredicateTree,
    table: &str,
    rows: u64,
    sels: &[f64],
    next: &mut usize,
    column_node: &mut impl FnMut(&mut Builder, &str, &str) -> Result<usize>,
) -> Result<usize> {
    // preorder slot of this node; children follow
    let sel = sels[*next];
    *next += 1;
    let mut inputs = Vec::new();
    match node {
        PredicateTree::Leaf(l) => inputs.push(column_node(b, table, &l.column)?),
        PredicateTree::And { children } | PredicateTree::Or { children } => {
            for c in children {
                inputs.push(encode_predicate(b, c, table, rows, sels, next, column_node)?);
            }
        }
    }
    let id = b.add(NodeType::Predicate, predicate_features(node, sel, rows));
    for i in inputs {
        b.edge(i, id);
    }
    Ok(id)
}

/// Encodes an annotated plan. In exact mode the plan must carry actuals.
pub fn encode(plan: &PhysicalPlan, catalog: &Catalog, mode: CardMode) -> Result<QueryGraph> {
    encode_with(plan, catalog, mode, &Statistics)
}

/// Random DAG with the given schema: node `n - 1` is a PlanOp root, every
/// other node feeds one or two later nodes, and about a third of the
/// features are zero.
pub fn random_graph(schema: &FeatureSchema, nodes: usize, seed: u64) -> QueryGraph {
    use rand::Rng as _;
    let mut r = crate::rng::derive_rng(seed, "random-graph");
    let n = nodes.max(1);
    let mut out = Vec::with_capacity(n);
    let mut edges = Vec::new();
    for id in 0..n {
        let kind = if id == n - 1 { NodeType::PlanOp } else { NodeType::ALL[r.random_range(0..NodeType::COUNT)] };
        let features = (0..schema.dim(kind))
            .map(|_| if r.random_bool(0.3) { 0.0 } else { r.random_range(-1.0..1.0) })
            .collect();
        out.push(GraphNode { id, kind, features });
        if id + 1 < n {
            let p = r.random_range(id + 1..n);
            edges.push((id, p));
            if r.random_bool(0.3) {
                let q = r.random_range(id + 1..n);
                if q != p {
                    edges.push((id, q));
                }
            }
        }
    }
    QueryGraph { format: GRAPH_FORMAT.to_string(), schema: schema.clone(), nodes: out, edges, root: n - 1 }
}
