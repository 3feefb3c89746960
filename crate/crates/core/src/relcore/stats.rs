use serde::{Deserialize, Serialize};

use super::{Column, ColumnData, Database, DataType};
use crate::{Error, Result};

pub const PAGE_SIZE: usize = 8192;
pub const DEFAULT_BUCKETS: usize = 32;

/// Equi-depth histogram over the non-null values of a column.
///
/// Bucket `0` covers `[bounds[0], bounds[1]]`, bucket `i > 0` covers
/// `(bounds[i], bounds[i + 1]]`. Boundaries are aligned to runs of equal
/// values, so every distinct value lives in exactly one bucket and bucket
/// sizes deviate from `n / B` by at most the longest duplicate run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub kind: String,
    pub bounds: Vec<f64>,
    pub counts: Vec<u64>,
    pub ndv: Vec<u64>,
}

impl Histogram {
    pub fn equi_depth(sorted: &[f64], buckets: usize) -> Histogram {
        let kind = "equi_depth".to_string();
        let n = sorted.len();
        if n == 0 {
            return Histogram { kind, bounds: vec![0.0, 0.0], counts: vec![0], ndv: vec![0] };
        }
        let buckets = buckets.max(1);
        let mut bounds = vec![sorted[0]];
        let mut counts = Vec::new();
        let mut ndv = Vec::new();
        let mut start = 0;
        for b in 0..buckets {
            let mut end = ((b + 1) * n).div_ceil(buckets);
            if end <= start {
                continue;
            }
            while end < n && sorted[end] == sorted[end - 1] {
                end += 1;
            }
            let distinct = 1 + sorted[start..end].windows(2).filter(|w| w[0] != w[1]).count();
            counts.push((end - start) as u64);
            ndv.push(distinct as u64);
            bounds.push(sorted[end - 1]);
            start = end;
            if start == n {
                break;
            }
        }
        Histogram { kind, bounds, counts, ndv }
    }

    pub fn buckets(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn min(&self) -> f64 {
        self.bounds[0]
    }

    pub fn max(&self) -> f64 {
        *self.bounds.last().expect("histogram has bounds")
    }

    /// Index of the bucket whose range contains `value`.
    pub fn bucket_of(&self, value: f64) -> Option<usize> {
        if self.total() == 0 || value < self.min() || value > self.max() {
            return None;
        }
        // first upper bound >= value
        let i = self.bounds[1..].partition_point(|b| *b < value);
        Some(i.min(self.buckets() - 1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub name: String,
    pub datatype: DataType,
    pub ndv: u64,
    pub null_frac: f64,
    /// Domain bounds, numeric columns only.
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub width_bytes: f64,
    pub histogram: Histogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableStats {
    pub name: String,
    pub row_count: u64,
    pub page_count: u64,
    pub row_width: f64,
    pub columns: Vec<ColumnStats>,
}

impl TableStats {
    pub fn column(&self, name: &str) -> Result<&ColumnStats> {
        self.columns.iter().find(|c| c.name == name).ok_or_else(|| Error::UnknownColumn {
            table: self.name.clone(),
            column: name.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub database: String,
    pub tables: Vec<TableStats>,
}

impl Catalog {
    pub fn table(&self, name: &str) -> Result<&TableStats> {
        self.tables.iter().find(|t| t.name == name).ok_or_else(|| Error::UnknownTable(name.to_string()))
    }

    pub fn column(&self, table: &str, column: &str) -> Result<&ColumnStats> {
        self.table(table)?.column(column)
    }
}

pub fn page_count(rows: u64, row_width: f64) -> u64 {
    ((rows as f64 * row_width / PAGE_SIZE as f64).ceil() as u64).max(1)
}

fn null_fraction(column: &Column) -> f64 {
    let n = column.len();
    if n == 0 {
        return 0.0;
    }
    let nulls = column.nulls.as_ref().map_or(0, |m| m.iter().filter(|&&b| b).count());
    nulls as f64 / n as f64
}

/// Page count of `table` as recorded in its catalog entry.
pub fn table_page_count(table: &crate::relcore::Table) -> u64 {
    let row_width: f64 = table.columns.iter().map(|c| c.average_width() * (1.0 - null_fraction(c))).sum();
    page_count(table.row_count as u64, row_width)
}

fn column_stats(column: &Column, buckets: usize) -> ColumnStats {
    let n = column.len();
    let mut values: Vec<f64> = (0..n).filter_map(|r| column.value(r)).collect();
    values.sort_by(f64::total_cmp);
    let non_null = values.len();
    let ndv = if non_null == 0 { 0 } else { 1 + values.windows(2).filter(|w| w[0] != w[1]).count() as u64 };
    let numeric = !matches!(column.data, ColumnData::Categorical { .. });
    ColumnStats {
        name: column.name.clone(),
        datatype: column.datatype(),
        ndv,
        null_frac: null_fraction(column),
        min: if numeric { values.first().copied() } else { None },
        max: if numeric { values.last().copied() } else { None },
        width_bytes: column.average_width(),
        histogram: Histogram::equi_depth(&values, buckets),
    }
}

/// Scans every column of `db` and builds its catalog.
pub fn compute_statistics(db: &Database, buckets: usize) -> Catalog {
    let tables = db
        .tables
        .iter()
        .map(|t| {
            let columns: Vec<ColumnStats> = t.columns.iter().map(|c| column_stats(c, buckets)).collect();
            // nulls occupy no payload bytes
            let row_width: f64 = columns.iter().map(|s| s.width_bytes * (1.0 - s.null_frac)).sum();
            TableStats {
                name: t.name.clone(),
                row_count: t.row_count as u64,
                page_count: page_count(t.row_count as u64, row_width),
                row_width,
                columns,
            }
        })
        .collect();
    Catalog { database: db.name.clone(), tables }
}
