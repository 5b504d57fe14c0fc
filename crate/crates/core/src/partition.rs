//! Tables as ordered lists of immutable micro-partitions, each carrying
//! per-column zone-map metadata (min, max, row count, null count).

use std::cmp::Ordering;
use std::io::Read;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::value::{DataType, Value};

pub type Row = Vec<Value>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Field {
    pub name: String,
    #[serde(rename = "type")]
    pub data_type: DataType,
}

impl Field {
    pub fn new(name: impl Into<String>, data_type: DataType) -> Self {
        Field {
            name: name.into(),
            data_type,
        }
    }
}

/// Ordered column list. Serializes as `{"columns":[{"name":..,"type":..}]}`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Schema {
    pub columns: Vec<Field>,
}

impl Schema {
    pub fn new(columns: Vec<Field>) -> Self {
        Schema { columns }
    }

    pub fn from_json(text: &str) -> Result<Schema> {
        let schema: Schema = serde_json::from_str(text)?;
        if schema.columns.is_empty() {
            return Err(Error::Schema("schema has no columns".into()));
        }
        Ok(schema)
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|f| f.name == name)
    }

    /// Resolves a possibly qualified column reference.
    ///
    /// An exact name match wins. Otherwise an unqualified `col` matches a
    /// field named `<qualifier>.col` if exactly one such field exists, and a
    /// qualified `q.col` matches a bare field `col`.
    pub fn resolve(&self, name: &str) -> Result<usize> {
        if let Some(i) = self.index_of(name) {
            return Ok(i);
        }
        let candidates: Vec<usize> = if name.contains('.') {
            let bare = name.rsplit('.').next().unwrap_or(name);
            self.columns
                .iter()
                .enumerate()
                .filter(|(_, f)| f.name == bare)
                .map(|(i, _)| i)
                .collect()
        } else {
            self.columns
                .iter()
                .enumerate()
                .filter(|(_, f)| f.name.rsplit('.').next() == Some(name) && f.name.contains('.'))
                .map(|(i, _)| i)
                .collect()
        };
        match candidates.as_slice() {
            [i] => Ok(*i),
            [] => Err(Error::Bind(format!("unknown column '{name}'"))),
            _ => Err(Error::Bind(format!("ambiguous column '{name}'"))),
        }
    }

    /// Same columns with every name prefixed by `qualifier.`.
    pub fn qualified(&self, qualifier: &str) -> Schema {
        Schema::new(
            self.columns
                .iter()
                .map(|f| Field::new(format!("{qualifier}.{}", f.name), f.data_type))
                .collect(),
        )
    }

    pub fn join(&self, other: &Schema) -> Schema {
        let mut columns = self.columns.clone();
        columns.extend(other.columns.iter().cloned());
        Schema::new(columns)
    }
}

/// Zone-map entry for one column of one partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub min: Option<Value>,
    pub max: Option<Value>,
    pub row_count: usize,
    pub null_count: usize,
}

impl ColumnStats {
    pub fn new(min: Option<Value>, max: Option<Value>, row_count: usize, null_count: usize) -> Self {
        ColumnStats {
            min,
            max,
            row_count,
            null_count,
        }
    }

    /// Stats for a null-free column with the given bounds.
    pub fn range(min: impl Into<Value>, max: impl Into<Value>, row_count: usize) -> Self {
        ColumnStats::new(Some(min.into()), Some(max.into()), row_count, 0)
    }

    pub fn all_null(&self) -> bool {
        self.null_count == self.row_count
    }
}

/// Min/max over the non-null values of a column plus exact counts.
pub fn compute_stats(column: &[Value]) -> Result<ColumnStats> {
    let mut min: Option<&Value> = None;
    let mut max: Option<&Value> = None;
    let mut nulls = 0;
    let mut ty: Option<DataType> = None;
    for v in column {
        if v.is_null() {
            nulls += 1;
            continue;
        }
        match ty {
            None => ty = Some(v.data_type()),
            Some(t) if t != v.data_type() => {
                return Err(Error::Type(format!(
                    "mixed column types: {t} and {}",
                    v.data_type()
                )))
            }
            _ => {}
        }
        min = match min {
            Some(m) if m.try_cmp(v)? != Ordering::Greater => Some(m),
            _ => Some(v),
        };
        max = match max {
            Some(m) if m.try_cmp(v)? != Ordering::Less => Some(m),
            _ => Some(v),
        };
    }
    Ok(ColumnStats {
        min: min.cloned(),
        max: max.cloned(),
        row_count: column.len(),
        null_count: nulls,
    })
}

/// Lookup of per-column stats by (possibly qualified) column name.
pub trait StatsSource {
    fn column_stats(&self, name: &str) -> Option<&ColumnStats>;
}

impl StatsSource for std::collections::HashMap<String, ColumnStats> {
    fn column_stats(&self, name: &str) -> Option<&ColumnStats> {
        self.get(name)
            .or_else(|| name.rsplit('.').next().and_then(|bare| self.get(bare)))
    }
}

impl StatsSource for std::collections::BTreeMap<String, ColumnStats> {
    fn column_stats(&self, name: &str) -> Option<&ColumnStats> {
        self.get(name)
            .or_else(|| name.rsplit('.').next().and_then(|bare| self.get(bare)))
    }
}

/// Immutable horizontal chunk of a table.
#[derive(Debug, Clone)]
pub struct MicroPartition {
    pub id: usize,
    schema: Arc<Schema>,
    /// Column-major data; all vectors share the same length.
    columns: Vec<Vec<Value>>,
    stats: Vec<ColumnStats>,
}

impl MicroPartition {
    pub fn new(id: usize, schema: Arc<Schema>, columns: Vec<Vec<Value>>) -> Result<Self> {
        if columns.len() != schema.len() {
            return Err(Error::Schema(format!(
                "partition {id} has {} columns, schema has {}",
                columns.len(),
                schema.len()
            )));
        }
        let rows = columns.first().map_or(0, Vec::len);
        if rows == 0 || columns.iter().any(|c| c.len() != rows) {
            return Err(Error::Schema(format!(
                "partition {id} has empty or ragged columns"
            )));
        }
        let stats = columns
            .iter()
            .map(|c| compute_stats(c))
            .collect::<Result<Vec<_>>>()?;
        Ok(MicroPartition {
            id,
            schema,
            columns,
            stats,
        })
    }

    pub fn num_rows(&self) -> usize {
        self.columns[0].len()
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn column(&self, idx: usize) -> &[Value] {
        &self.columns[idx]
    }

    pub fn stats(&self) -> &[ColumnStats] {
        &self.stats
    }

    pub fn stats_for(&self, name: &str) -> Option<&ColumnStats> {
        self.schema.index_of(name).map(|i| &self.stats[i])
    }

    pub fn row(&self, idx: usize) -> Row {
        self.columns.iter().map(|c| c[idx].clone()).collect()
    }

    pub fn rows(&self) -> impl Iterator<Item = Row> + '_ {
        (0..self.num_rows()).map(move |i| self.row(i))
    }

    /// Recomputes stats from the data and compares with the stored ones.
    pub fn stats_consistent(&self) -> bool {
        self.columns
            .iter()
            .zip(&self.stats)
            .all(|(c, s)| compute_stats(c).map(|r| &r == s).unwrap_or(false))
    }
}

impl StatsSource for MicroPartition {
    fn column_stats(&self, name: &str) -> Option<&ColumnStats> {
        self.schema
            .resolve(name)
            .ok()
            .map(|i| &self.stats[i])
    }
}

#[derive(Debug, Clone)]
pub struct Table {
    pub name: String,
    schema: Arc<Schema>,
    partitions: Vec<MicroPartition>,
}

impl Table {
    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn partitions(&self) -> &[MicroPartition] {
        &self.partitions
    }

    pub fn partition(&self, id: usize) -> Option<&MicroPartition> {
        // ids are 1-based and dense
        id.checked_sub(1)
            .and_then(|i| self.partitions.get(i))
            .filter(|p| p.id == id)
            .or_else(|| self.partitions.iter().find(|p| p.id == id))
    }

    pub fn num_rows(&self) -> usize {
        self.partitions.iter().map(MicroPartition::num_rows).sum()
    }

    pub fn rows(&self) -> impl Iterator<Item = Row> + '_ {
        self.partitions.iter().flat_map(MicroPartition::rows)
    }

    /// Assembles a table from pre-built partitions (ids must increase).
    pub fn from_partitions(
        name: impl Into<String>,
        schema: Arc<Schema>,
        partitions: Vec<MicroPartition>,
    ) -> Result<Table> {
        if partitions.windows(2).any(|w| w[0].id >= w[1].id) {
            return Err(Error::Schema("partition ids must be strictly increasing".into()));
        }
        if partitions.iter().any(|p| p.schema() != schema.as_ref()) {
            return Err(Error::Schema("partition schema mismatch".into()));
        }
        Ok(Table {
            name: name.into(),
            schema,
            partitions,
        })
    }
}

fn check_row(schema: &Schema, row: &[Value], idx: usize) -> Result<()> {
    if row.len() != schema.len() {
        return Err(Error::Schema(format!(
            "row {idx} has {} values, schema has {} columns",
            row.len(),
            schema.len()
        )));
    }
    for (v, f) in row.iter().zip(&schema.columns) {
        if !v.is_null() && v.data_type() != f.data_type {
            return Err(Error::Schema(format!(
                "row {idx}, column '{}': expected {}, got {}",
                f.name,
                f.data_type,
                v.data_type()
            )));
        }
    }
    Ok(())
}

/// Chunks `rows` into partitions of `target_rows_per_partition` rows (the
/// last one may be shorter), optionally sorting globally first.
pub fn build_table(
    name: impl Into<String>,
    schema: Schema,
    mut rows: Vec<Row>,
    target_rows_per_partition: usize,
    sort_columns: Option<&[String]>,
) -> Result<Table> {
    if schema.is_empty() {
        return Err(Error::Schema("schema has no columns".into()));
    }
    if target_rows_per_partition == 0 {
        return Err(Error::Schema("target rows per partition must be >= 1".into()));
    }
    for (i, row) in rows.iter().enumerate() {
        check_row(&schema, row, i)?;
    }
    if let Some(cols) = sort_columns {
        let idx = cols
            .iter()
            .map(|c| {
                schema
                    .index_of(c)
                    .ok_or_else(|| Error::Schema(format!("unknown sort column '{c}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.sort_by(|a, b| {
            idx.iter()
                .map(|&i| a[i].total_cmp(&b[i]))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        });
    }
    let schema = Arc::new(schema);
    let mut partitions = Vec::with_capacity(rows.len().div_ceil(target_rows_per_partition));
    for (n, chunk) in rows.chunks(target_rows_per_partition).enumerate() {
        let mut columns = vec![Vec::with_capacity(chunk.len()); schema.len()];
        for row in chunk {
            for (c, v) in columns.iter_mut().zip(row) {
                c.push(v.clone());
            }
        }
        partitions.push(MicroPartition::new(n + 1, schema.clone(), columns)?);
    }
    Ok(Table {
        name: name.into(),
        schema,
        partitions,
    })
}

fn parse_cell(text: &str, ty: DataType) -> std::result::Result<Value, String> {
    match ty {
        DataType::Int64 => text
            .trim()
            .parse::<i64>()
            .map(Value::Int)
            .map_err(|e| format!("'{text}' is not an int64: {e}")),
        DataType::Float64 => text
            .trim()
            .parse::<f64>()
            .map(Value::Float)
            .map_err(|e| format!("'{text}' is not a float64: {e}")),
        DataType::Bool => match text.trim().to_ascii_lowercase().as_str() {
            "true" | "t" | "1" => Ok(Value::Bool(true)),
            "false" | "f" | "0" => Ok(Value::Bool(false)),
            _ => Err(format!("'{text}' is not a bool")),
        },
        DataType::Utf8 => Ok(Value::Str(text.to_string())),
        DataType::Null => Err("column of type null".into()),
    }
}

/// Parses CSV (with header) into typed rows. Positions in errors are
/// 1-based data row and column numbers.
pub fn read_csv<R: Read>(reader: R, schema: &Schema, null_token: &str) -> Result<Vec<Row>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    let expected: Vec<&str> = schema.columns.iter().map(|f| f.name.as_str()).collect();
    if names != expected {
        return Err(Error::Schema(format!(
            "csv header {names:?} does not match schema {expected:?}"
        )));
    }
    let mut rows = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != schema.len() {
            return Err(Error::CsvParse {
                row: r + 1,
                column: record.len().min(schema.len()) + 1,
                message: format!("expected {} fields, found {}", schema.len(), record.len()),
            });
        }
        let row = record
            .iter()
            .zip(&schema.columns)
            .enumerate()
            .map(|(c, (cell, f))| {
                if cell == null_token {
                    Ok(Value::Null)
                } else {
                    parse_cell(cell, f.data_type).map_err(|message| Error::CsvParse {
                        row: r + 1,
                        column: c + 1,
                        message,
                    })
                }
            })
            .collect::<Result<Row>>()?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn ingest_csv(path: impl AsRef<Path>, schema: &Schema, null_token: &str) -> Result<Vec<Row>> {
    let file = std::fs::File::open(path)?;
    read_csv(file, schema, null_token)
}

/// Writes rows as CSV with a header; nulls become `null_token`.
pub fn write_csv<W: std::io::Write>(
    writer: W,
    schema: &Schema,
    rows: &[Row],
    null_token: &str,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(schema.columns.iter().map(|f| f.name.as_str()))?;
    for row in rows {
        w.write_record(row.iter().map(|v| match v {
            Value::Null => null_token.to_string(),
            Value::Str(s) => s.clone(),
            Value::Bool(b) => b.to_string(),
            Value::Int(i) => i.to_string(),
            Value::Float(f) => format!("{f:?}"),
        }))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn int_schema() -> Schema {
        Schema::new(vec![Field::new("x", DataType::Int64)])
    }

    fn int_rows(n: i64) -> Vec<Row> {
        (0..n).map(|i| vec![Value::Int(i)]).collect()
    }

    #[test]
    fn empty_input_gives_no_partitions() {
        let t = build_table("t", int_schema(), vec![], 3, None).unwrap();
        assert!(t.partitions().is_empty());
    }

    #[test]
    fn chunking_arithmetic() {
        let t = build_table("t", int_schema(), int_rows(10), 3, None).unwrap();
        let sizes: Vec<_> = t.partitions().iter().map(|p| p.num_rows()).collect();
        assert_eq!(sizes, vec![3, 3, 3, 1]);
        let ids: Vec<_> = t.partitions().iter().map(|p| p.id).collect();
        assert_eq!(ids, vec![1, 2, 3, 4]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(build_table("t", Schema::default(), vec![], 3, None).is_err());
        assert!(build_table("t", int_schema(), int_rows(2), 0, None).is_err());
        let bad = vec![vec![Value::from("a")]];
        assert!(matches!(
            build_table("t", int_schema(), bad, 3, None),
            Err(Error::Schema(_))
        ));
        let ragged = vec![vec![Value::Int(1), Value::Int(2)]];
        assert!(build_table("t", int_schema(), ragged, 3, None).is_err());
    }

    #[test]
    fn sorted_build_orders_rows() {
        let rows: Vec<Row> = [5, 1, 4, 2, 3].iter().map(|&i| vec![Value::Int(i)]).collect();
        let t = build_table("t", int_schema(), rows, 2, Some(&["x".to_string()])).unwrap();
        let flat: Vec<_> = t.rows().map(|r| r[0].clone()).collect();
        assert_eq!(flat, int_rows(6)[1..].iter().map(|r| r[0].clone()).collect::<Vec<_>>());
    }

    #[test]
    fn stats_examples() {
        let s = compute_stats(&[Value::Int(7), Value::Int(133), Value::Int(82)]).unwrap();
        assert_eq!(s, ColumnStats::range(7, 133, 3));

        let s = compute_stats(&[Value::Null, Value::Null]).unwrap();
        assert_eq!(s, ColumnStats::new(None, None, 2, 2));
        assert!(s.all_null());

        let s = compute_stats(&[
            Value::from("Alpine Ibex"),
            Value::from("Alpine Goat"),
            Value::from("Alpine Sheep"),
        ])
        .unwrap();
        assert_eq!(s.min, Some(Value::from("Alpine Goat")));
        assert_eq!(s.max, Some(Value::from("Alpine Sheep")));

        assert!(compute_stats(&[Value::Int(1), Value::from("x")]).is_err());
    }

    #[test]
    fn csv_parsing() {
        let schema = Schema::new(vec![
            Field::new("name", DataType::Utf8),
            Field::new("n", DataType::Int64),
        ]);
        assert!(read_csv("name,n\n".as_bytes(), &schema, "NA").unwrap().is_empty());
        let rows = read_csv("name,n\na,1\nb,2".as_bytes(), &schema, "NA").unwrap();
        assert_eq!(rows.len(), 2);
        let rows = read_csv("name,n\n\"q,uoted\",NA\n".as_bytes(), &schema, "NA").unwrap();
        assert_eq!(rows[0], vec![Value::from("q,uoted"), Value::Null]);

        match read_csv("name,n\na,1\nb,x\n".as_bytes(), &schema, "NA") {
            Err(Error::CsvParse { row, column, .. }) => assert_eq!((row, column), (2, 2)),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            read_csv("name,n\na\n".as_bytes(), &schema, "NA"),
            Err(Error::CsvParse { row: 1, .. })
        ));
        assert!(read_csv("x,n\n".as_bytes(), &schema, "NA").is_err());
    }

    #[test]
    fn schema_json() {
        let s = Schema::from_json(r#"{"columns":[{"name":"s","type":"int64"}]}"#).unwrap();
        assert_eq!(s, Schema::new(vec![Field::new("s", DataType::Int64)]));
        assert!(Schema::from_json(r#"{"columns":[]}"#).is_err());
    }

    #[test]
    fn resolve_qualified_names() {
        let s = Schema::new(vec![
            Field::new("t.a", DataType::Int64),
            Field::new("d.a", DataType::Int64),
            Field::new("d.b", DataType::Int64),
        ]);
        assert_eq!(s.resolve("b").unwrap(), 2);
        assert_eq!(s.resolve("t.a").unwrap(), 0);
        assert!(s.resolve("a").is_err());
        let bare = Schema::new(vec![Field::new("a", DataType::Int64)]);
        assert_eq!(bare.resolve("t.a").unwrap(), 0);
    }
}
