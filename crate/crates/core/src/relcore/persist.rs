//! On-disk layout of a database directory:
//!
//! ```text
//! manifest.txt              key: value lines (schema, foreign keys, indexes)
//! <table>.<column>.bin      little-endian values (i64 / f64 / u32 dictionary codes)
//! <table>.<column>.nulls    one byte per row, 1 = null (only for nullable columns)
//! <table>.<column>.dict     one dictionary entry per line (categoricals only)
//! catalog.json              statistics, when saved alongside
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Catalog, Column, ColumnData, ColumnRole, Database, DataType, ForeignKey, IndexDef, Table};
use crate::{Error, Result};

pub const MANIFEST_FORMAT: &str = "zsc_db_v1";

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn role_text(role: &ColumnRole) -> String {
    match role {
        ColumnRole::Key => "key".into(),
        ColumnRole::ForeignKey { table } => format!("fk {table}"),
        ColumnRole::Attribute => "attribute".into(),
    }
}

pub fn save_database(db: &Database, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut m = String::new();
    writeln!(m, "format: {MANIFEST_FORMAT}").unwrap();
    writeln!(m, "name: {}", db.name).unwrap();
    writeln!(m, "seed: {}", db.seed).unwrap();
    for t in &db.tables {
        writeln!(m, "table: {} {}", t.name, t.row_count).unwrap();
        for c in &t.columns {
            let nullable = if c.nulls.is_some() { " nullable" } else { "" };
            writeln!(m, "column: {} {} {} {}{nullable}", t.name, c.name, c.datatype().tag(), role_text(&c.role)).unwrap();
            let stem = format!("{}.{}", t.name, c.name);
            let bytes: Vec<u8> = match &c.data {
                ColumnData::Int(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
                ColumnData::Float(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
                ColumnData::Categorical { codes, dictionary } => {
                    let mut dict = dictionary.join("\n");
                    dict.push('\n');
                    write(&dir.join(format!("{stem}.dict")), dict.as_bytes())?;
                    codes.iter().flat_map(|x| x.to_le_bytes()).collect()
                }
            };
            write(&dir.join(format!("{stem}.bin")), &bytes)?;
            if let Some(mask) = &c.nulls {
                let bytes: Vec<u8> = mask.iter().map(|&b| u8::from(b)).collect();
                write(&dir.join(format!("{stem}.nulls")), &bytes)?;
            }
        }
    }
    for fk in &db.foreign_keys {
        writeln!(m, "fk: {}.{} -> {}.{}", fk.child_table, fk.child_column, fk.parent_table, fk.parent_column).unwrap();
    }
    for idx in &db.indexes {
        writeln!(m, "index: {}.{} unique={}", idx.def.table, idx.def.column, idx.def.unique).unwrap();
    }
    write(&dir.join("manifest.txt"), m.as_bytes())
}

fn split_dotted<'a>(path: &Path, s: &'a str) -> Result<(&'a str, &'a str)> {
    s.split_once('.').ok_or_else(|| Error::format(path, format!("expected table.column, got `{s}`")))
}

fn chunks<'a, const N: usize>(path: &Path, bytes: &'a [u8], rows: usize) -> Result<impl Iterator<Item = [u8; N]> + 'a> {
    if bytes.len() != rows * N {
        return Err(Error::format(path, format!("expected {} bytes, found {}", rows * N, bytes.len())));
    }
    Ok(bytes.chunks_exact(N).map(|c| c.try_into().expect("exact chunk")))
}

pub fn load_database(dir: &Path) -> Result<Database> {
    let manifest_path = dir.join("manifest.txt");
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let bad = |msg: String| Error::format(&manifest_path, msg);

    let mut name = None;
    let mut seed = None;
    let mut format_ok = false;
    let mut tables: Vec<Table> = Vec::new();
    let mut foreign_keys = Vec::new();
    let mut index_defs = Vec::new();

    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once(": ").ok_or_else(|| bad(format!("line {}: expected `key: value`", lineno + 1)))?;
        let fields: Vec<&str> = value.split_whitespace().collect();
        match key {
            "format" => {
                if value != MANIFEST_FORMAT {
                    return Err(bad(format!("unsupported format `{value}`")));
                }
                format_ok = true;
            }
            "name" => name = Some(value.to_string()),
            "seed" => seed = Some(value.parse::<u64>().map_err(|e| bad(format!("seed: {e}")))?),
            "table" => {
                let [t, rows] = fields[..] else { return Err(bad(format!("line {}: bad table entry", lineno + 1))) };
                let row_count = rows.parse().map_err(|e| bad(format!("rows: {e}")))?;
                tables.push(Table { name: t.to_string(), row_count, columns: Vec::new() });
            }
            "column" => {
                if fields.len() < 4 {
                    return Err(bad(format!("line {}: bad column entry", lineno + 1)));
                }
                let (t, c, ty) = (fields[0], fields[1], fields[2]);
                let datatype = DataType::from_tag(ty).ok_or_else(|| bad(format!("unknown datatype `{ty}`")))?;
                let (role, rest) = match fields[3] {
                    "key" => (ColumnRole::Key, &fields[4..]),
                    "attribute" => (ColumnRole::Attribute, &fields[4..]),
                    "fk" if fields.len() >= 5 => (ColumnRole::ForeignKey { table: fields[4].to_string() }, &fields[5..]),
                    other => return Err(bad(format!("unknown column role `{other}`"))),
                };
                let nullable = rest.first() == Some(&"nullable");
                let table = tables
                    .iter_mut()
                    .find(|x| x.name == t)
                    .ok_or_else(|| bad(format!("column for undeclared table `{t}`")))?;
                let rows = table.row_count;
                let stem = format!("{t}.{c}");
                let bin_path = dir.join(format!("{stem}.bin"));
                let bytes = read(&bin_path)?;
                let data = match datatype {
                    DataType::Int => ColumnData::Int(chunks::<8>(&bin_path, &bytes, rows)?.map(i64::from_le_bytes).collect()),
                    DataType::Float => ColumnData::Float(chunks::<8>(&bin_path, &bytes, rows)?.map(f64::from_le_bytes).collect()),
                    DataType::Categorical => {
                        let codes: Vec<u32> = chunks::<4>(&bin_path, &bytes, rows)?.map(u32::from_le_bytes).collect();
                        let dict_path = dir.join(format!("{stem}.dict"));
                        let dict = fs::read_to_string(&dict_path).map_err(|e| Error::io(&dict_path, e))?;
                        let dictionary: Vec<String> = dict.lines().map(str::to_string).collect();
                        if codes.iter().any(|&k| k as usize >= dictionary.len()) {
                            return Err(Error::format(&dict_path, "code outside dictionary"));
                        }
                        ColumnData::Categorical { codes, dictionary }
                    }
                };
                let nulls = if nullable {
                    let p = dir.join(format!("{stem}.nulls"));
                    let bytes = read(&p)?;
                    if bytes.len() != rows {
                        return Err(Error::format(&p, "null mask length mismatch"));
                    }
                    Some(bytes.into_iter().map(|b| b != 0).collect())
                } else {
                    None
                };
                table.columns.push(Column { name: c.to_string(), role, data, nulls });
            }
            "fk" => {
                let [child, "->", parent] = fields[..] else { return Err(bad(format!("line {}: bad fk entry", lineno + 1))) };
                let (ct, cc) = split_dotted(&manifest_path, child)?;
                let (pt, pc) = split_dotted(&manifest_path, parent)?;
                foreign_keys.push(ForeignKey {
                    child_table: ct.into(),
                    child_column: cc.into(),
                    parent_table: pt.into(),
                    parent_column: pc.into(),
                });
            }
            "index" => {
                let [target, unique] = fields[..] else { return Err(bad(format!("line {}: bad index entry", lineno + 1))) };
                let (t, c) = split_dotted(&manifest_path, target)?;
                let unique = match unique {
                    "unique=true" => true,
                    "unique=false" => false,
                    other => return Err(bad(format!("bad index flag `{other}`"))),
                };
                index_defs.push(IndexDef { table: t.into(), column: c.into(), unique });
            }
            other => return Err(bad(format!("unknown key `{other}`"))),
        }
    }
    if !format_ok {
        return Err(bad("missing format line".into()));
    }
    let mut db = Database {
        name: name.ok_or_else(|| bad("missing name".into()))?,
        seed: seed.ok_or_else(|| bad("missing seed".into()))?,
        tables,
        foreign_keys,
        indexes: Vec::new(),
    };
    for def in &index_defs {
        db.build_index(def)?;
    }
    Ok(db)
}

pub fn save_catalog(catalog: &Catalog, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(catalog)?;
    write(path, text.as_bytes())
}

pub fn load_catalog(path: &Path) -> Result<Catalog> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
