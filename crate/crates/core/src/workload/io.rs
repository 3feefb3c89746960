use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{AggFunc, PredicateTree, QuerySpec};
use crate::relcore::Database;
use crate::{Error, Result};

/// One JSON-encoded query per line.
pub fn write_workload(path: &Path, queries: &[QuerySpec]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for q in queries {
        serde_json::to_writer(&mut w, q)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_workload(path: &Path) -> Result<Vec<QuerySpec>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let q: QuerySpec =
            serde_json::from_str(&line).map_err(|e| Error::format(path, format!("line {}: {e}", i + 1)))?;
        q.validate()?;
        out.push(q);
    }
    Ok(out)
}

fn render_predicate(db: &Database, table: &str, p: &PredicateTree, out: &mut String) {
    match p {
        PredicateTree::Leaf(l) => {
            let col = db.column(table, &l.column).ok();
            let show = |v: f64| col.map(|c| c.render(v)).unwrap_or_else(|| v.to_string());
            if l.values.len() > 1 || l.op == super::CompareOp::In {
                let vals: Vec<String> = l.values.iter().map(|&v| show(v)).collect();
                write!(out, "{table}.{} IN ({})", l.column, vals.join(", ")).unwrap();
            } else {
                write!(out, "{table}.{} {} {}", l.column, l.op.sql(), show(l.values[0])).unwrap();
            }
        }
        PredicateTree::And { children } | PredicateTree::Or { children } => {
            let sep = if matches!(p, PredicateTree::And { .. }) { " AND " } else { " OR " };
            out.push('(');
            for (i, c) in children.iter().enumerate() {
                if i > 0 {
                    out.push_str(sep);
                }
                render_predicate(db, table, c, out);
            }
            out.push(')');
        }
    }
}

/// SQL-like rendering for human inspection.
pub fn render_sql(q: &QuerySpec, db: &Database) -> String {
    let aggs: Vec<String> = q
        .aggregates
        .iter()
        .map(|a| match (&a.func, &a.column) {
            (AggFunc::Count, _) | (_, None) => "COUNT(*)".to_string(),
            (f, Some(c)) => format!("{}({c})", f.sql()),
        })
        .collect();
    let mut sql = format!("SELECT {} FROM {}", aggs.join(", "), q.tables.join(", "));
    let mut conds = Vec::new();
    for j in &q.joins {
        conds.push(format!("{}.{} = {}.{}", j.child_table, j.child_column, j.parent_table, j.parent_column));
    }
    for f in &q.filters {
        let mut s = String::new();
        render_predicate(db, &f.table, &f.predicate, &mut s);
        conds.push(s);
    }
    if !conds.is_empty() {
        sql.push_str(" WHERE ");
        sql.push_str(&conds.join(" AND "));
    }
    sql.push(';');
    sql
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relcore::{compute_statistics, generate_database, GenConfig, Range};
    use crate::workload::{generate_workload, WorkloadConfig};

    #[test]
    fn jsonl_round_trip_and_rendering() {
        let cfg = GenConfig { rows: Range::new(50, 200), ..GenConfig::default() };
        let db = generate_database("io", &cfg, 8).unwrap();
        let cat = compute_statistics(&db, 16);
        let w = generate_workload(&db, &cat, &WorkloadConfig { query_count: 40, ..WorkloadConfig::default() }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.jsonl");
        write_workload(&p, &w.queries).unwrap();
        assert_eq!(read_workload(&p).unwrap(), w.queries);
        for q in &w.queries {
            let sql = render_sql(q, &db);
            assert!(sql.starts_with("SELECT ") && sql.ends_with(';'));
        }
    }
}
