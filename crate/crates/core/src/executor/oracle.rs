//! Nested-loop reference semantics: enumerate the cross product, keep the
//! tuples that satisfy every join and filter, then aggregate.

use std::collections::BTreeMap;

use crate::relcore::{Database, ForeignKey};
use crate::workload::{AggFunc, QuerySpec};
use crate::{Error, Result};

/// Largest cross product the oracle is willing to enumerate.
pub const ORACLE_LIMIT: u128 = 10_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub values: Vec<Option<f64>>,
    /// Result size of every connected sub-join, keyed by sorted table names.
    pub subset_cards: BTreeMap<Vec<String>, u64>,
}

impl OracleResult {
    pub fn card_of(&self, tables: &[String]) -> Option<u64> {
        let mut key = tables.to_vec();
        key.sort();
        self.subset_cards.get(&key).copied()
    }
}

fn connected(subset: &[usize], tables: &[String], joins: &[ForeignKey]) -> bool {
    let inside = |name: &str| subset.iter().any(|&i| tables[i] == name);
    let edges = joins.iter().filter(|j| inside(&j.child_table) && inside(&j.parent_table)).count();
    // joins form a tree, so a forest restricted to the subset is connected iff it has |S|-1 edges
    edges + 1 == subset.len()
}

pub fn brute_force_oracle(q: &QuerySpec, db: &Database) -> Result<OracleResult> {
    q.validate()?;
    let tables: Vec<_> = q.tables.iter().map(|t| db.table(t)).collect::<Result<_>>()?;
    let product: u128 = tables.iter().map(|t| t.row_count as u128).product();
    if product > ORACLE_LIMIT {
        return Err(Error::OracleTooLarge(product));
    }
    // rows passing each table's own filter
    let mut passing: Vec<Vec<usize>> = Vec::new();
    for t in &tables {
        let rows = match q.filter(&t.name) {
            None => (0..t.row_count).collect(),
            Some(p) => {
                let mut keep = Vec::new();
                for r in 0..t.row_count {
                    let lookup = |c: &str| t.column(c).ok().and_then(|col| col.value(r));
                    if p.eval(&lookup) {
                        keep.push(r);
                    }
                }
                keep
            }
        };
        passing.push(rows);
    }

    let k = tables.len();
    let mut subset_cards = BTreeMap::new();
    let mut values = Vec::new();
    for mask in 1u32..(1 << k) {
        let subset: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).collect();
        if !connected(&subset, &q.tables, &q.joins) {
            continue;
        }
        let full = subset.len() == k;
        let mut edges = Vec::new();
        for j in &q.joins {
            let c = subset.iter().position(|&i| q.tables[i] == j.child_table);
            let p = subset.iter().position(|&i| q.tables[i] == j.parent_table);
            if let (Some(c), Some(p)) = (c, p) {
                let cc = tables[subset[c]].column(&j.child_column)?;
                let pc = tables[subset[p]].column(&j.parent_column)?;
                edges.push((c, cc, p, pc));
            }
        }
        let mut aggs: Vec<(Option<f64>, u64)> = vec![(None, 0); q.aggregates.len()];
        let mut count = 0u64;
        let mut cursor = vec![0usize; subset.len()];
        if subset.iter().all(|&i| !passing[i].is_empty()) {
            'outer: loop {
                let row = |s: usize| passing[subset[s]][cursor[s]];
                let joined = edges.iter().all(|(c, cc, p, pc)| {
                    matches!((cc.key(row(*c)), pc.key(row(*p))), (Some(a), Some(b)) if a == b)
                });
                if joined {
                    count += 1;
                    if full {
                        for (slot, a) in aggs.iter_mut().zip(&q.aggregates) {
                            let Some(col) = &a.column else { continue };
                            let s = subset.iter().position(|&i| q.tables[i] == col.table).expect("validated");
                            let Some(v) = tables[subset[s]].column(&col.column)?.value(row(s)) else { continue };
                            slot.1 += 1;
                            slot.0 = Some(match (slot.0, a.func) {
                                (None, _) => v,
                                (Some(x), AggFunc::Min) => x.min(v),
                                (Some(x), AggFunc::Max) => x.max(v),
                                (Some(x), _) => x + v,
                            });
                        }
                    }
                }
                let mut d = 0;
                loop {
                    if d == subset.len() {
                        break 'outer;
                    }
                    cursor[d] += 1;
                    if cursor[d] < passing[subset[d]].len() {
                        break;
                    }
                    cursor[d] = 0;
                    d += 1;
                }
            }
        }
        if full {
            values = q
                .aggregates
                .iter()
                .zip(&aggs)
                .map(|(a, (acc, n))| match a.func {
                    AggFunc::Count => Some(count as f64),
                    AggFunc::Avg => acc.map(|s| s / *n as f64),
                    _ => *acc,
                })
                .collect();
        }
        let mut key: Vec<String> = subset.iter().map(|&i| q.tables[i].clone()).collect();
        key.sort();
        subset_cards.insert(key, count);
    }
    Ok(OracleResult { values, subset_cards })
}
