//! Random aggregation workloads and random index sets.

mod generate;
mod io;
mod predicate;

pub use generate::{generate_index_set, generate_workload, index_pool, Workload, WorkloadConfig};
pub use io::{read_workload, render_sql, write_workload};
pub use predicate::{CompareOp, Leaf, PredicateTree};

use serde::{Deserialize, Serialize};

use crate::relcore::ForeignKey;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ColumnRef {
    pub table: String,
    pub column: String,
}

impl ColumnRef {
    pub fn new(table: impl Into<String>, column: impl Into<String>) -> Self {
        ColumnRef { table: table.into(), column: column.into() }
    }
}

impl std::fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}.{}", self.table, self.column)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggFunc {
    Count,
    Sum,
    Avg,
    Min,
    Max,
}

impl AggFunc {
    pub const ALL: [AggFunc; 5] = [AggFunc::Count, AggFunc::Sum, AggFunc::Avg, AggFunc::Min, AggFunc::Max];

    pub fn sql(self) -> &'static str {
        match self {
            AggFunc::Count => "COUNT",
            AggFunc::Sum => "SUM",
            AggFunc::Avg => "AVG",
            AggFunc::Min => "MIN",
            AggFunc::Max => "MAX",
        }
    }
}

/// `COUNT(*)` has no column; every other function names a numeric column.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Aggregate {
    pub func: AggFunc,
    pub column: Option<ColumnRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableFilter {
    pub table: String,
    pub predicate: PredicateTree,
}

/// A scalar aggregation query over a connected set of tables joined on
/// foreign-key = key equalities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuerySpec {
    pub id: u64,
    pub tables: Vec<String>,
    pub joins: Vec<ForeignKey>,
    pub filters: Vec<TableFilter>,
    pub aggregates: Vec<Aggregate>,
}

impl QuerySpec {
    /// Copy with table and column names mapped, as for [`crate::relcore::Database::renamed`].
    pub fn renamed(&self, table: &impl Fn(&str) -> String, column: &impl Fn(&str, &str) -> String) -> QuerySpec {
        let col = |c: &ColumnRef| ColumnRef::new(table(&c.table), column(&c.table, &c.column));
        QuerySpec {
            id: self.id,
            tables: self.tables.iter().map(|t| table(t)).collect(),
            joins: self
                .joins
                .iter()
                .map(|fk| ForeignKey {
                    child_table: table(&fk.child_table),
                    child_column: column(&fk.child_table, &fk.child_column),
                    parent_table: table(&fk.parent_table),
                    parent_column: column(&fk.parent_table, &fk.parent_column),
                })
                .collect(),
            filters: self
                .filters
                .iter()
                .map(|f| {
                    let mut predicate = f.predicate.clone();
                    predicate.rename_columns(&|c| column(&f.table, c));
                    TableFilter { table: table(&f.table), predicate }
                })
                .collect(),
            aggregates: self
                .aggregates
                .iter()
                .map(|a| Aggregate { func: a.func, column: a.column.as_ref().map(col) })
                .collect(),
        }
    }

    pub fn filter(&self, table: &str) -> Option<&PredicateTree> {
        self.filters.iter().find(|f| f.table == table).map(|f| &f.predicate)
    }

    pub fn predicate_leaves(&self) -> usize {
        self.filters.iter().map(|f| f.predicate.leaf_count()).sum()
    }

    /// Checks the structural invariants: connected tree join graph over
    /// distinct tables, filters on joined tables, at least one aggregate.
    pub fn validate(&self) -> crate::Result<()> {
        use crate::Error;
        if self.tables.is_empty() {
            return Err(Error::InvalidQuery("no tables".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for t in &self.tables {
            if !seen.insert(t.as_str()) {
                return Err(Error::InvalidQuery(format!("table `{t}` listed twice")));
            }
        }
        if self.joins.len() + 1 != self.tables.len() {
            return Err(Error::InvalidQuery("join graph is not a tree".into()));
        }
        // union-find over table positions
        let pos = |t: &str| self.tables.iter().position(|x| x == t);
        let mut parent: Vec<usize> = (0..self.tables.len()).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for j in &self.joins {
            let (Some(a), Some(b)) = (pos(&j.child_table), pos(&j.parent_table)) else {
                return Err(Error::InvalidQuery(format!("join {}->{} leaves the query", j.child_table, j.parent_table)));
            };
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra == rb {
                return Err(Error::InvalidQuery("join graph has a cycle".into()));
            }
            parent[ra] = rb;
        }
        for f in &self.filters {
            if pos(&f.table).is_none() {
                return Err(Error::InvalidQuery(format!("filter on unjoined table `{}`", f.table)));
            }
        }
        if self.aggregates.is_empty() {
            return Err(Error::InvalidQuery("no aggregates".into()));
        }
        for a in &self.aggregates {
            match (&a.func, &a.column) {
                (AggFunc::Count, None) => {}
                (AggFunc::Count, Some(_)) => return Err(Error::InvalidQuery("COUNT takes no column".into())),
                (_, None) => return Err(Error::InvalidQuery(format!("{} needs a column", a.func.sql()))),
                (_, Some(c)) => {
                    if pos(&c.table).is_none() {
                        return Err(Error::InvalidQuery(format!("aggregate over unjoined table `{}`", c.table)));
                    }
                }
            }
        }
        Ok(())
    }
}
