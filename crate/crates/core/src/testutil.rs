//! Small hand-built fixtures shared by unit tests.

use crate::relcore::{compute_statistics, Catalog, Column, ColumnData, ColumnRole, Database, ForeignKey, Table};
use crate::workload::{AggFunc, Aggregate, ColumnRef, CompareOp, Leaf, PredicateTree, QuerySpec, TableFilter};

fn int(name: &str, role: ColumnRole, values: Vec<i64>) -> Column {
    Column { name: name.into(), role, data: ColumnData::Int(values), nulls: None }
}

pub fn fk(child: &str, column: &str, parent: &str) -> ForeignKey {
    ForeignKey { child_table: child.into(), child_column: column.into(), parent_table: parent.into(), parent_column: "id".into() }
}

/// `fact(200) -> dim(10) -> sub(4)`.
///
/// * `fact.a = i % 100`, `fact.b = (i % 8) / 64` with every 7th row null
/// * `dim.cat` codes `i % 5`, `dim.w = 10 i`
/// * `sub.x = i + 1`
pub fn toy_db() -> Database {
    let fact_rows = 200;
    let fact = Table {
        name: "fact".into(),
        row_count: fact_rows,
        columns: vec![
            int("id", ColumnRole::Key, (0..fact_rows as i64).collect()),
            int("dim_id", ColumnRole::ForeignKey { table: "dim".into() }, (0..fact_rows as i64).map(|i| i % 10).collect()),
            int("a", ColumnRole::Attribute, (0..fact_rows as i64).map(|i| i % 100).collect()),
            Column {
                name: "b".into(),
                role: ColumnRole::Attribute,
                data: ColumnData::Float((0..fact_rows).map(|i| (i % 8) as f64 / 64.0).collect()),
                nulls: Some((0..fact_rows).map(|i| i % 7 == 0).collect()),
            },
        ],
    };
    let dim = Table {
        name: "dim".into(),
        row_count: 10,
        columns: vec![
            int("id", ColumnRole::Key, (0..10).collect()),
            int("sub_id", ColumnRole::ForeignKey { table: "sub".into() }, (0..10).map(|i| i % 4).collect()),
            Column {
                name: "cat".into(),
                role: ColumnRole::Attribute,
                data: ColumnData::Categorical {
                    codes: (0..10).map(|i| i % 5).collect(),
                    dictionary: ["ash", "birch", "cedar", "elm", "fir"].iter().map(|s| s.to_string()).collect(),
                },
                nulls: None,
            },
            int("w", ColumnRole::Attribute, (0..10).map(|i| 10 * i).collect()),
        ],
    };
    let sub = Table {
        name: "sub".into(),
        row_count: 4,
        columns: vec![int("id", ColumnRole::Key, (0..4).collect()), int("x", ColumnRole::Attribute, (1..=4).collect())],
    };
    Database {
        name: "toy".into(),
        seed: 0,
        tables: vec![fact, dim, sub],
        foreign_keys: vec![fk("fact", "dim_id", "dim"), fk("dim", "sub_id", "sub")],
        indexes: vec![],
    }
}

pub fn toy_catalog(db: &Database) -> Catalog {
    compute_statistics(db, 32)
}

pub fn leaf(column: &str, op: CompareOp, values: &[f64]) -> PredicateTree {
    PredicateTree::Leaf(Leaf { column: column.into(), op, values: values.to_vec() })
}

pub fn count() -> Aggregate {
    Aggregate { func: AggFunc::Count, column: None }
}

pub fn agg(func: AggFunc, table: &str, column: &str) -> Aggregate {
    Aggregate { func, column: Some(ColumnRef::new(table, column)) }
}

pub fn query(tables: &[&str], filters: Vec<(&str, PredicateTree)>, aggregates: Vec<Aggregate>) -> QuerySpec {
    let all = [fk("fact", "dim_id", "dim"), fk("dim", "sub_id", "sub")];
    let joins = all
        .into_iter()
        .filter(|j| tables.contains(&j.child_table.as_str()) && tables.contains(&j.parent_table.as_str()))
        .collect();
    QuerySpec {
        id: 1,
        tables: tables.iter().map(|s| s.to_string()).collect(),
        joins,
        filters: filters.into_iter().map(|(t, p)| TableFilter { table: t.into(), predicate: p }).collect(),
        aggregates,
    }
}
