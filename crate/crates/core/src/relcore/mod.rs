//! In-memory relational core: synthetic databases held column-major,
//! catalog statistics and single-column indexes.

mod generate;
mod index;
mod persist;
mod stats;

pub use generate::{generate_column_values, generate_database, DatatypeWeights, DistributionWeights, GenConfig, Range, ValueDistribution};
pub use index::ColumnIndex;
pub use persist::{load_catalog, load_database, save_catalog, save_database, MANIFEST_FORMAT};
pub use stats::{compute_statistics, page_count, table_page_count, Catalog, ColumnStats, Histogram, TableStats, DEFAULT_BUCKETS, PAGE_SIZE};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataType {
    Int,
    Float,
    Categorical,
}

impl DataType {
    pub const ALL: [DataType; 3] = [DataType::Int, DataType::Float, DataType::Categorical];

    pub fn is_numeric(self) -> bool {
        !matches!(self, DataType::Categorical)
    }

    pub fn tag(self) -> &'static str {
        match self {
            DataType::Int => "int",
            DataType::Float => "float",
            DataType::Categorical => "categorical",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        DataType::ALL.into_iter().find(|t| t.tag() == tag)
    }
}

/// What a column is used for inside its table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnRole {
    /// Dense unique key `0..row_count`.
    Key,
    /// References the key column of `table`.
    ForeignKey { table: String },
    Attribute,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Int(Vec<i64>),
    /// Generated floats are dyadic rationals, so sums over them are exact.
    Float(Vec<f64>),
    Categorical { codes: Vec<u32>, dictionary: Vec<String> },
}

impl ColumnData {
    pub fn len(&self) -> usize {
        match self {
            ColumnData::Int(v) => v.len(),
            ColumnData::Float(v) => v.len(),
            ColumnData::Categorical { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn datatype(&self) -> DataType {
        match self {
            ColumnData::Int(_) => DataType::Int,
            ColumnData::Float(_) => DataType::Float,
            ColumnData::Categorical { .. } => DataType::Categorical,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub role: ColumnRole,
    pub data: ColumnData,
    /// `Some(mask)` when the column holds nulls; `mask[row]` is true for null.
    pub nulls: Option<Vec<bool>>,
}

impl Column {
    pub fn datatype(&self) -> DataType {
        self.data.datatype()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_null(&self, row: usize) -> bool {
        self.nulls.as_ref().is_some_and(|m| m[row])
    }

    /// Value of `row` on the common numeric axis: integers and floats as
    /// themselves, categoricals as their dictionary code.
    #[inline]
    pub fn value(&self, row: usize) -> Option<f64> {
        if self.is_null(row) {
            return None;
        }
        Some(match &self.data {
            ColumnData::Int(v) => v[row] as f64,
            ColumnData::Float(v) => v[row],
            ColumnData::Categorical { codes, .. } => f64::from(codes[row]),
        })
    }

    /// Key value used by joins. Only meaningful for key and foreign-key columns.
    #[inline]
    pub fn key(&self, row: usize) -> Option<i64> {
        if self.is_null(row) {
            return None;
        }
        match &self.data {
            ColumnData::Int(v) => Some(v[row]),
            _ => None,
        }
    }

    /// Bytes a value of this column occupies on average (nulls excluded).
    pub fn average_width(&self) -> f64 {
        match &self.data {
            ColumnData::Int(_) | ColumnData::Float(_) => 8.0,
            ColumnData::Categorical { codes, dictionary } => {
                let mut total = 0usize;
                let mut n = 0usize;
                for (row, &c) in codes.iter().enumerate() {
                    if !self.is_null(row) {
                        total += dictionary[c as usize].len();
                        n += 1;
                    }
                }
                if n == 0 {
                    0.0
                } else {
                    total as f64 / n as f64
                }
            }
        }
    }

    /// Renders a value of this column for humans (dictionary strings for categoricals).
    pub fn render(&self, value: f64) -> String {
        match &self.data {
            ColumnData::Int(_) => format!("{}", value as i64),
            ColumnData::Float(_) => format!("{value}"),
            ColumnData::Categorical { dictionary, .. } => dictionary
                .get(value as usize)
                .map(|s| format!("'{s}'"))
                .unwrap_or_else(|| format!("#{value}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub row_count: usize,
    pub columns: Vec<Column>,
}

impl Table {
    pub fn column(&self, name: &str) -> Result<&Column> {
        self.columns.iter().find(|c| c.name == name).ok_or_else(|| Error::UnknownColumn {
            table: self.name.clone(),
            column: name.to_string(),
        })
    }
}

/// Directed edge `child_table.child_column -> parent_table.parent_column`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ForeignKey {
    pub child_table: String,
    pub child_column: String,
    pub parent_table: String,
    pub parent_column: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IndexDef {
    pub table: String,
    pub column: String,
    #[serde(default)]
    pub unique: bool,
}

impl IndexDef {
    pub fn new(table: impl Into<String>, column: impl Into<String>) -> Self {
        IndexDef { table: table.into(), column: column.into(), unique: false }
    }

    /// `(table, column)` identifies an index; the `unique` flag does not.
    pub fn same_target(&self, other: &IndexDef) -> bool {
        self.table == other.table && self.column == other.column
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaterializedIndex {
    pub def: IndexDef,
    pub index: ColumnIndex,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Database {
    pub name: String,
    pub seed: u64,
    pub tables: Vec<Table>,
    pub foreign_keys: Vec<ForeignKey>,
    /// Kept sorted by `(table, column)`.
    pub indexes: Vec<MaterializedIndex>,
}

impl Database {
    pub fn table(&self, name: &str) -> Result<&Table> {
        self.tables.iter().find(|t| t.name == name).ok_or_else(|| Error::UnknownTable(name.to_string()))
    }

    pub fn column(&self, table: &str, column: &str) -> Result<&Column> {
        self.table(table)?.column(column)
    }

    pub fn index_defs(&self) -> Vec<IndexDef> {
        self.indexes.iter().map(|m| m.def.clone()).collect()
    }

    pub fn index(&self, table: &str, column: &str) -> Option<&ColumnIndex> {
        self.indexes.iter().find(|m| m.def.table == table && m.def.column == column).map(|m| &m.index)
    }

    pub fn has_index(&self, def: &IndexDef) -> bool {
        self.index(&def.table, &def.column).is_some()
    }

    /// Builds a sorted lookup structure over `def`'s column. Building an
    /// index that already exists is a no-op.
    pub fn build_index(&mut self, def: &IndexDef) -> Result<()> {
        if self.has_index(def) {
            return Ok(());
        }
        let column = self.column(&def.table, &def.column)?;
        let index = ColumnIndex::build(column);
        let pos = self
            .indexes
            .binary_search_by(|m| (&m.def.table, &m.def.column).cmp(&(&def.table, &def.column)))
            .unwrap_err();
        self.indexes.insert(pos, MaterializedIndex { def: def.clone(), index });
        Ok(())
    }

    /// Returns a copy of the database with `def` materialized.
    pub fn with_index(&self, def: &IndexDef) -> Result<Database> {
        let mut db = self.clone();
        db.build_index(def)?;
        Ok(db)
    }

    pub fn drop_indexes(&mut self) {
        self.indexes.clear();
    }

    pub fn total_rows(&self) -> usize {
        self.tables.iter().map(|t| t.row_count).sum()
    }

    /// Foreign-key edges touching `table`, in declaration order.
    pub fn neighbors<'a>(&'a self, table: &'a str) -> impl Iterator<Item = &'a ForeignKey> + 'a {
        self.foreign_keys.iter().filter(move |fk| fk.child_table == table || fk.parent_table == table)
    }

    /// Attribute columns usable in filter predicates.
    pub fn filter_columns(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for t in &self.tables {
            for c in &t.columns {
                if c.role == ColumnRole::Attribute {
                    out.push((t.name.clone(), c.name.clone()));
                }
            }
        }
        out
    }

    /// Copy with every database, table and column name mapped. Column
    /// names are mapped per `(table, column)`.
    pub fn renamed(&self, name: &str, table: &impl Fn(&str) -> String, column: &impl Fn(&str, &str) -> String) -> Result<Database> {
        let tables = self
            .tables
            .iter()
            .map(|t| Table {
                name: table(&t.name),
                row_count: t.row_count,
                columns: t
                    .columns
                    .iter()
                    .map(|c| Column {
                        name: column(&t.name, &c.name),
                        role: match &c.role {
                            ColumnRole::ForeignKey { table: parent } => ColumnRole::ForeignKey { table: table(parent) },
                            other => other.clone(),
                        },
                        data: c.data.clone(),
                        nulls: c.nulls.clone(),
                    })
                    .collect(),
            })
            .collect();
        let foreign_keys = self
            .foreign_keys
            .iter()
            .map(|fk| ForeignKey {
                child_table: table(&fk.child_table),
                child_column: column(&fk.child_table, &fk.child_column),
                parent_table: table(&fk.parent_table),
                parent_column: column(&fk.parent_table, &fk.parent_column),
            })
            .collect();
        let mut out = Database { name: name.to_string(), seed: self.seed, tables, foreign_keys, indexes: Vec::new() };
        for m in &self.indexes {
            out.build_index(&IndexDef {
                table: table(&m.def.table),
                column: column(&m.def.table, &m.def.column),
                unique: m.def.unique,
            })?;
        }
        Ok(out)
    }
}
