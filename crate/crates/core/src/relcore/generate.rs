use rand::Rng as _;
use rand_distr::{Distribution, Normal, Zipf};
use serde::{Deserialize, Serialize};

use super::{Column, ColumnData, ColumnRole, Database, DataType, ForeignKey, Table};
use crate::rng::{self, Rng};
use crate::{Error, Result};

/// Inclusive `[min, max]` range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range<T> {
    pub min: T,
    pub max: T,
}

impl<T> Range<T> {
    pub const fn new(min: T, max: T) -> Self {
        Range { min, max }
    }
}

impl<T: PartialOrd + Copy + std::fmt::Debug> Range<T> {
    fn check(&self, what: &str) -> Result<()> {
        if self.min > self.max {
            return Err(Error::Config(format!("{what}: empty range {:?}..{:?}", self.min, self.max)));
        }
        Ok(())
    }
}

impl Range<usize> {
    fn sample(&self, rng: &mut Rng) -> usize {
        rng.random_range(self.min..=self.max)
    }
}

impl Range<f64> {
    fn sample(&self, rng: &mut Rng) -> f64 {
        if self.min == self.max {
            self.min
        } else {
            rng.random_range(self.min..=self.max)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatatypeWeights {
    pub int: f64,
    pub float: f64,
    pub categorical: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionWeights {
    pub uniform: f64,
    pub zipf: f64,
    pub normal: f64,
}

/// Shape parameters for one generated database.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub table_count: Range<usize>,
    /// Rows per table, sampled log-uniformly.
    pub rows: Range<usize>,
    /// Attribute (non-key) columns per table.
    pub attribute_columns: Range<usize>,
    pub datatype_weights: DatatypeWeights,
    pub distribution_weights: DistributionWeights,
    pub zipf_exponent: Range<f64>,
    /// Distinct values as a fraction of the row count.
    pub ndv_ratio: Range<f64>,
    pub max_categorical_ndv: usize,
    pub null_frac: Range<f64>,
    /// Dimension tables referenced by each table of the snowflake.
    pub fk_fanout: Range<usize>,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            table_count: Range::new(3, 8),
            rows: Range::new(1_000, 100_000),
            attribute_columns: Range::new(2, 6),
            datatype_weights: DatatypeWeights { int: 0.4, float: 0.3, categorical: 0.3 },
            distribution_weights: DistributionWeights { uniform: 0.4, zipf: 0.4, normal: 0.2 },
            zipf_exponent: Range::new(0.5, 2.0),
            ndv_ratio: Range::new(0.0005, 1.0),
            max_categorical_ndv: 1000,
            null_frac: Range::new(0.0, 0.2),
            fk_fanout: Range::new(1, 3),
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        self.table_count.check("table_count")?;
        self.rows.check("rows")?;
        self.attribute_columns.check("attribute_columns")?;
        self.zipf_exponent.check("zipf_exponent")?;
        self.ndv_ratio.check("ndv_ratio")?;
        self.null_frac.check("null_frac")?;
        self.fk_fanout.check("fk_fanout")?;
        if self.table_count.min == 0 {
            return Err(Error::Config("table_count must be at least 1".into()));
        }
        if self.rows.min == 0 {
            return Err(Error::Config("rows must be at least 1".into()));
        }
        if self.rows.max > u32::MAX as usize {
            return Err(Error::Config("rows exceed 32-bit row positions".into()));
        }
        if self.ndv_ratio.min <= 0.0 || self.ndv_ratio.max > 1.0 {
            return Err(Error::Config(format!(
                "ndv_ratio must lie in (0, 1], got {}..{}",
                self.ndv_ratio.min, self.ndv_ratio.max
            )));
        }
        if self.null_frac.min < 0.0 || self.null_frac.max >= 1.0 {
            return Err(Error::Config("null_frac must lie in [0, 1)".into()));
        }
        if self.zipf_exponent.min <= 0.0 {
            return Err(Error::Config("zipf_exponent must be positive".into()));
        }
        if self.max_categorical_ndv == 0 {
            return Err(Error::Config("max_categorical_ndv must be positive".into()));
        }
        if self.table_count.max > 1 && self.fk_fanout.min == 0 {
            return Err(Error::Config("fk_fanout must be at least 1 for multi-table schemas".into()));
        }
        let d = self.datatype_weights;
        check_weights("datatype_weights", &[d.int, d.float, d.categorical])?;
        let v = self.distribution_weights;
        check_weights("distribution_weights", &[v.uniform, v.zipf, v.normal])?;
        Ok(())
    }
}

fn check_weights(what: &str, w: &[f64]) -> Result<()> {
    if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::Config(format!("{what}: weights must be non-negative")));
    }
    let sum: f64 = w.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("{what}: weights sum to {sum}, expected 1")));
    }
    Ok(())
}

fn pick_weighted(rng: &mut Rng, weights: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ValueDistribution {
    Uniform,
    /// Rank `k` (0-based) has weight `1 / (k + 1)^s`.
    Zipf { s: f64 },
    Normal,
}

/// Draws `rows` value ranks in `0..ndv` from `dist`.
pub fn generate_column_values(dist: ValueDistribution, ndv: usize, rows: usize, rng: &mut Rng) -> Vec<u32> {
    assert!(ndv >= 1, "ndv must be positive");
    let top = (ndv - 1) as f64;
    match dist {
        ValueDistribution::Uniform => (0..rows).map(|_| rng.random_range(0..ndv) as u32).collect(),
        ValueDistribution::Zipf { s } => {
            if ndv == 1 {
                return vec![0; rows];
            }
            let zipf = Zipf::new(ndv as f64, s).expect("valid zipf parameters");
            (0..rows).map(|_| (zipf.sample(rng) as usize - 1).min(ndv - 1) as u32).collect()
        }
        ValueDistribution::Normal => {
            let normal = Normal::new(top / 2.0, (ndv as f64 / 6.0).max(1e-9)).expect("valid normal parameters");
            (0..rows).map(|_| normal.sample(rng).round().clamp(0.0, top) as u32).collect()
        }
    }
}

fn pick_distribution(cfg: &GenConfig, rng: &mut Rng) -> ValueDistribution {
    let w = cfg.distribution_weights;
    match pick_weighted(rng, &[w.uniform, w.zipf, w.normal]) {
        0 => ValueDistribution::Uniform,
        1 => ValueDistribution::Zipf { s: cfg.zipf_exponent.sample(rng) },
        _ => ValueDistribution::Normal,
    }
}

fn log_uniform(range: Range<usize>, rng: &mut Rng) -> usize {
    if range.min == range.max {
        return range.min;
    }
    let lo = (range.min as f64).ln();
    let hi = (range.max as f64).ln();
    let x: f64 = rng.random_range(lo..=hi);
    (x.exp().round() as usize).clamp(range.min, range.max)
}

fn random_word(len: usize, rng: &mut Rng) -> String {
    (0..len).map(|_| char::from(b'a' + rng.random_range(0..26u8))).collect()
}

fn attribute_column(name: String, cfg: &GenConfig, rows: usize, rng: &mut Rng) -> Column {
    let d = cfg.datatype_weights;
    let datatype = DataType::ALL[pick_weighted(rng, &[d.int, d.float, d.categorical])];
    let dist = pick_distribution(cfg, rng);
    let ratio = cfg.ndv_ratio.sample(rng);
    let mut ndv = ((ratio * rows as f64).round() as usize).clamp(1, rows.max(1));
    if datatype == DataType::Categorical {
        ndv = ndv.min(cfg.max_categorical_ndv);
    }
    let ranks = generate_column_values(dist, ndv, rows, rng);
    let data = match datatype {
        DataType::Int => {
            let offset: i64 = rng.random_range(-1000..=1000);
            let step: i64 = rng.random_range(1..=10);
            ColumnData::Int(ranks.iter().map(|&k| offset + i64::from(k) * step).collect())
        }
        DataType::Float => {
            // Multiples of 1/64 keep every partial sum exactly representable.
            let offset = f64::from(rng.random_range(-64_000..=64_000)) / 64.0;
            let step = f64::from(rng.random_range(1..=640)) / 64.0;
            ColumnData::Float(ranks.iter().map(|&k| offset + f64::from(k) * step).collect())
        }
        DataType::Categorical => {
            let base = rng.random_range(2..=20);
            let digits = ndv.to_string().len();
            let dictionary = (0..ndv).map(|k| format!("{}{k:0digits$}", random_word(base, rng))).collect();
            ColumnData::Categorical { codes: ranks, dictionary }
        }
    };
    let null_frac = cfg.null_frac.sample(rng);
    let nulls = if null_frac > 0.0 {
        let mask: Vec<bool> = (0..rows).map(|_| rng.random::<f64>() < null_frac).collect();
        mask.iter().any(|&b| b).then_some(mask)
    } else {
        None
    };
    Column { name, role: ColumnRole::Attribute, data, nulls }
}

/// Generates a snowflake-shaped database. `t0` is the fact table; every
/// other table is a dimension referenced by exactly one table through a
/// `<dimension>_id` foreign key, so the foreign-key graph is a tree.
pub fn generate_database(name: &str, cfg: &GenConfig, seed: u64) -> Result<Database> {
    cfg.validate()?;
    let mut rng = rng::derive_rng(seed, "database");

    let n_tables = cfg.table_count.sample(&mut rng);
    let mut dimensions: Vec<Vec<usize>> = vec![Vec::new(); n_tables];
    let mut queue = std::collections::VecDeque::from([0usize]);
    let mut next = 1;
    while next < n_tables {
        let parent = queue.pop_front().expect("fanout >= 1 keeps the queue non-empty");
        let fanout = cfg.fk_fanout.sample(&mut rng).max(1);
        for _ in 0..fanout {
            if next == n_tables {
                break;
            }
            dimensions[parent].push(next);
            queue.push_back(next);
            next += 1;
        }
    }

    let rows: Vec<usize> = (0..n_tables).map(|_| log_uniform(cfg.rows, &mut rng)).collect();
    let names: Vec<String> = (0..n_tables).map(|i| format!("t{i}")).collect();

    let mut tables = Vec::with_capacity(n_tables);
    let mut foreign_keys = Vec::new();
    for t in 0..n_tables {
        let n = rows[t];
        let mut columns = vec![Column {
            name: "id".into(),
            role: ColumnRole::Key,
            data: ColumnData::Int((0..n as i64).collect()),
            nulls: None,
        }];
        for &dim in &dimensions[t] {
            let fk_name = format!("{}_id", names[dim]);
            let dist = pick_distribution(cfg, &mut rng);
            let ranks = generate_column_values(dist, rows[dim], n, &mut rng);
            columns.push(Column {
                name: fk_name.clone(),
                role: ColumnRole::ForeignKey { table: names[dim].clone() },
                data: ColumnData::Int(ranks.into_iter().map(i64::from).collect()),
                nulls: None,
            });
            foreign_keys.push(ForeignKey {
                child_table: names[t].clone(),
                child_column: fk_name,
                parent_table: names[dim].clone(),
                parent_column: "id".into(),
            });
        }
        let n_attr = cfg.attribute_columns.sample(&mut rng);
        for a in 0..n_attr {
            columns.push(attribute_column(format!("c{a}"), cfg, n, &mut rng));
        }
        tables.push(Table { name: names[t].clone(), row_count: n, columns });
    }

    Ok(Database { name: name.to_string(), seed, tables, foreign_keys, indexes: Vec::new() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn small() -> GenConfig {
        GenConfig { rows: Range::new(200, 2000), ..GenConfig::default() }
    }

    #[test]
    fn same_seed_same_database() {
        let a = generate_database("d", &small(), 42).unwrap();
        let b = generate_database("d", &small(), 42).unwrap();
        assert_eq!(a, b);
        let c = generate_database("d", &small(), 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn fixed_row_range_forces_row_counts() {
        let cfg = GenConfig { rows: Range::new(1000, 1000), ..GenConfig::default() };
        let db = generate_database("d", &cfg, 1).unwrap();
        assert!(db.tables.iter().all(|t| t.row_count == 1000 && t.columns.iter().all(|c| c.len() == 1000)));
    }

    #[test]
    fn foreign_keys_resolve_and_form_a_tree() {
        for seed in 0..10 {
            let db = generate_database("d", &small(), seed).unwrap();
            assert_eq!(db.foreign_keys.len(), db.tables.len() - 1);
            // every non-root table is referenced exactly once
            let parents: HashSet<_> = db.foreign_keys.iter().map(|fk| fk.parent_table.clone()).collect();
            assert_eq!(parents.len(), db.tables.len() - 1);
            assert!(!parents.contains("t0"));
            for fk in &db.foreign_keys {
                let child = db.column(&fk.child_table, &fk.child_column).unwrap();
                let parent = db.table(&fk.parent_table).unwrap();
                for r in 0..child.len() {
                    let k = child.key(r).unwrap();
                    assert!(k >= 0 && (k as usize) < parent.row_count);
                }
            }
        }
    }

    #[test]
    fn infeasible_configs_are_rejected() {
        let bad = GenConfig { ndv_ratio: Range::new(0.5, 1.5), ..GenConfig::default() };
        assert!(matches!(generate_database("d", &bad, 0), Err(Error::Config(_))));
        let bad = GenConfig { rows: Range::new(10, 5), ..GenConfig::default() };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let bad = GenConfig {
            datatype_weights: DatatypeWeights { int: 0.5, float: 0.5, categorical: 0.5 },
            ..GenConfig::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn zipf_head_frequency_matches_harmonic_number() {
        // Expected share of rank 0 under zipf(s=1) over 100 values is 1/H(100).
        let harmonic: f64 = (1..=100).map(|k| 1.0 / k as f64).sum();
        let expected = 10_000.0 / harmonic;
        let mut rng = rng::seeded(9);
        let ranks = generate_column_values(ValueDistribution::Zipf { s: 1.0 }, 100, 10_000, &mut rng);
        let mut counts = [0usize; 100];
        for r in ranks {
            counts[r as usize] += 1;
        }
        let top = *counts.iter().max().unwrap() as f64;
        assert_eq!(counts[0] as f64, top);
        // binomial sd is about 39 rows
        assert!((top - expected).abs() < 160.0, "top {top} expected {expected}");
    }

    #[test]
    fn float_values_are_dyadic() {
        let db = generate_database("d", &small(), 5).unwrap();
        for t in &db.tables {
            for c in &t.columns {
                if let ColumnData::Float(v) = &c.data {
                    assert!(v.iter().all(|x| (x * 64.0).fract() == 0.0));
                }
            }
        }
    }
}
