//! Identity-based encoding used as the non-transferable ablation: tables
//! and columns become positions in a registry of everything seen during
//! training.

use serde::{Deserialize, Serialize};

use super::{encode_with, CardMode, FeatureSchema, Identity, QueryGraph, AGGREGATION_DIM, PLAN_OP_DIM, PREDICATE_DIM};
use crate::planner::PhysicalPlan;
use crate::relcore::Catalog;
use crate::Result;

pub const ONEHOT_SCHEMA: &str = "onehot_v1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OneHotRegistry {
    /// Sorted `database/table` keys.
    pub tables: Vec<String>,
    /// Sorted `database/table/column` keys.
    pub columns: Vec<String>,
}

impl OneHotRegistry {
    pub fn from_catalogs<'a>(catalogs: impl IntoIterator<Item = &'a Catalog>) -> Self {
        let mut tables = Vec::new();
        let mut columns = Vec::new();
        for cat in catalogs {
            for t in &cat.tables {
                tables.push(format!("{}/{}", cat.database, t.name));
                for c in &t.columns {
                    columns.push(format!("{}/{}/{}", cat.database, t.name, c.name));
                }
            }
        }
        tables.sort();
        tables.dedup();
        columns.sort();
        columns.dedup();
        OneHotRegistry { tables, columns }
    }

    pub fn schema(&self) -> FeatureSchema {
        FeatureSchema {
            name: format!("{ONEHOT_SCHEMA}/{}x{}", self.tables.len(), self.columns.len()),
            dims: [PLAN_OP_DIM, self.tables.len(), self.columns.len(), PREDICATE_DIM, AGGREGATION_DIM],
        }
    }

    /// All zeros for anything the registry has never seen.
    fn hot(keys: &[String], key: &str) -> Vec<f64> {
        let mut v = vec![0.0; keys.len()];
        if let Ok(i) = keys.binary_search_by(|k| k.as_str().cmp(key)) {
            v[i] = 1.0;
        }
        v
    }
}

impl Identity for OneHotRegistry {
    fn schema(&self) -> FeatureSchema {
        OneHotRegistry::schema(self)
    }

    fn table(&self, catalog: &Catalog, table: &str) -> Result<Vec<f64>> {
        catalog.table(table)?;
        Ok(Self::hot(&self.tables, &format!("{}/{table}", catalog.database)))
    }

    fn column(&self, catalog: &Catalog, table: &str, column: &str) -> Result<Vec<f64>> {
        catalog.column(table, column)?;
        Ok(Self::hot(&self.columns, &format!("{}/{table}/{column}", catalog.database)))
    }
}

/// Same graph structure as [`super::encode`], with Table and Column
/// features replaced by registry one-hots.
pub fn encode_onehot_ablation(plan: &PhysicalPlan, catalog: &Catalog, mode: CardMode, registry: &OneHotRegistry) -> Result<QueryGraph> {
    encode_with(plan, catalog, mode, registry)
}
