//! Catalog directories: one sub-directory per table holding the raw rows
//! as CSV plus the schema and partitioning settings. Partitions are rebuilt
//! deterministically on load.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::{build_table, ingest_csv, write_csv, Row, Schema, Table};
use crate::plan::Catalog;

const NULL_TOKEN: &str = "\\N";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableMeta {
    pub name: String,
    pub partition_rows: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sort_by: Option<Vec<String>>,
}

/// Builds the table and writes it under `dir/<name>/`.
pub fn save_table(dir: &Path, meta: &TableMeta, schema: &Schema, rows: Vec<Row>) -> Result<Table> {
    let valid = meta
        .name
        .chars()
        .all(|c| c.is_ascii_alphanumeric() || c == '_');
    if meta.name.is_empty() || !valid {
        return Err(Error::Schema(format!("invalid table name '{}'", meta.name)));
    }
    let table = build_table(
        meta.name.clone(),
        schema.clone(),
        rows.clone(),
        meta.partition_rows,
        meta.sort_by.as_deref(),
    )?;
    let tdir = dir.join(&meta.name);
    fs::create_dir_all(&tdir)?;
    fs::write(tdir.join("schema.json"), serde_json::to_string_pretty(schema)?)?;
    fs::write(tdir.join("table.json"), serde_json::to_string_pretty(meta)?)?;
    write_csv(fs::File::create(tdir.join("data.csv"))?, schema, &rows, NULL_TOKEN)?;
    Ok(table)
}

pub fn load_table(tdir: &Path) -> Result<Table> {
    let meta: TableMeta = serde_json::from_str(&fs::read_to_string(tdir.join("table.json"))?)?;
    let schema = Schema::from_json(&fs::read_to_string(tdir.join("schema.json"))?)?;
    let rows = ingest_csv(tdir.join("data.csv"), &schema, NULL_TOKEN)?;
    build_table(meta.name, schema, rows, meta.partition_rows, meta.sort_by.as_deref())
}

/// Loads every table found under `dir`.
pub fn load_catalog(dir: &Path) -> Result<Catalog> {
    let mut catalog = Catalog::new();
    if !dir.is_dir() {
        return Err(Error::Schema(format!("catalog directory {} not found", dir.display())));
    }
    let mut entries: Vec<_> = fs::read_dir(dir)?.collect::<std::io::Result<_>>()?;
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        if e.path().join("table.json").is_file() {
            catalog.insert(load_table(&e.path())?);
        }
    }
    Ok(catalog)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::Field;
    use crate::value::{DataType, Value};

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let schema = Schema::new(vec![Field::new("a", DataType::Int64), Field::new("b", DataType::Utf8)]);
        let rows: Vec<Row> = (0..7)
            .map(|i| vec![Value::Int(7 - i), if i == 2 { Value::Null } else { Value::from("x,\"y\"") }])
            .collect();
        let meta = TableMeta {
            name: "t".into(),
            partition_rows: 3,
            sort_by: Some(vec!["a".into()]),
        };
        let built = save_table(dir.path(), &meta, &schema, rows).unwrap();
        let c = load_catalog(dir.path()).unwrap();
        let loaded = c.table("t").unwrap();
        assert_eq!(loaded.partitions().len(), 3);
        assert_eq!(loaded.rows().collect::<Vec<_>>(), built.rows().collect::<Vec<_>>());
    }
}
