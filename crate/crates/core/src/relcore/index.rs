use super::Column;

/// Sorted `(value, row)` lookup structure over the non-null values of one column.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnIndex {
    keys: Vec<f64>,
    rows: Vec<u32>,
    /// Row count of the indexed table.
    table_rows: usize,
}

impl ColumnIndex {
    pub fn build(column: &Column) -> Self {
        let mut entries: Vec<(f64, u32)> =
            (0..column.len()).filter_map(|r| column.value(r).map(|v| (v, r as u32))).collect();
        entries.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let (keys, rows) = entries.into_iter().unzip();
        ColumnIndex { keys, rows, table_rows: column.len() }
    }

    /// Row positions holding `value`, in ascending row order.
    pub fn lookup(&self, value: f64) -> &[u32] {
        let lo = self.keys.partition_point(|k| k.total_cmp(&value).is_lt());
        let hi = lo + self.keys[lo..].partition_point(|k| k.total_cmp(&value).is_le());
        &self.rows[lo..hi]
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn table_rows(&self) -> usize {
        self.table_rows
    }
}
