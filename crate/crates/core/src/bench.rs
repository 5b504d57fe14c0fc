//! Synthetic clustered datasets with a matching query workload.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::{build_table, Field, Row, Schema, Table};
use crate::store::{save_table, TableMeta};
use crate::value::{DataType, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Int,
    Float,
    String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Distribution {
    Uniform,
    /// Row number modulo the cardinality.
    Sequential,
    /// Zipf over the cardinality with the given exponent.
    Zipf { exponent: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default = "uniform")]
    pub distribution: Distribution,
    /// Number of distinct values; values are drawn from `0..cardinality`
    /// (strings are zero-padded `v` + number).
    pub cardinality: u64,
    #[serde(default)]
    pub null_fraction: f64,
}

fn uniform() -> Distribution {
    Distribution::Uniform
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    #[serde(default = "default_table")]
    pub table: String,
    pub rows: usize,
    pub partitions: usize,
    /// 0 shuffles, 1 keeps the table sorted on the cluster column.
    pub clustering: f64,
    pub cluster_column: String,
    pub columns: Vec<ColumnSpec>,
    #[serde(default)]
    pub seed: u64,
    /// Rows of the small join table keyed on the cluster column's domain;
    /// 0 leaves it out.
    #[serde(default)]
    pub dim_rows: usize,
    #[serde(default = "default_selectivities")]
    pub selectivities: Vec<f64>,
    #[serde(default = "default_k")]
    pub k: usize,
}

fn default_table() -> String {
    "facts".into()
}

fn default_selectivities() -> Vec<f64> {
    vec![0.001, 0.01, 0.1, 0.5]
}

fn default_k() -> usize {
    10
}

impl GeneratorSpec {
    /// A small spec with an int cluster column `ts`, a string `category`,
    /// a float `amount` and an int `user_id`.
    pub fn example(rows: usize, partitions: usize, clustering: f64, seed: u64) -> Self {
        let col = |name: &str, kind, cardinality| ColumnSpec {
            name: name.into(),
            kind,
            distribution: Distribution::Uniform,
            cardinality,
            null_fraction: 0.0,
        };
        GeneratorSpec {
            table: default_table(),
            rows,
            partitions,
            clustering,
            cluster_column: "ts".into(),
            columns: vec![
                col("ts", ColumnKind::Int, 1_000_000),
                col("category", ColumnKind::String, 50),
                col("amount", ColumnKind::Float, 100_000),
                col("user_id", ColumnKind::Int, 10_000),
            ],
            seed,
            dim_rows: 200,
            selectivities: default_selectivities(),
            k: default_k(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Schema(m));
        if self.rows == 0 || self.partitions == 0 {
            return bad("rows and partitions must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.clustering) {
            return bad(format!("clustering {} is outside [0, 1]", self.clustering));
        }
        if self.columns.iter().any(|c| c.cardinality == 0) {
            return bad("column cardinality must be >= 1".into());
        }
        if self.columns.iter().any(|c| !(0.0..=1.0).contains(&c.null_fraction)) {
            return bad("null_fraction must be in [0, 1]".into());
        }
        match self.columns.iter().find(|c| c.name == self.cluster_column) {
            Some(c) if c.kind == ColumnKind::Int => Ok(()),
            Some(_) => bad("the cluster column must be an int column".into()),
            None => bad(format!("cluster column '{}' is not among the columns", self.cluster_column)),
        }
    }

    pub fn partition_rows(&self) -> usize {
        self.rows.div_ceil(self.partitions)
    }

    fn cluster_spec(&self) -> &ColumnSpec {
        self.columns
            .iter()
            .find(|c| c.name == self.cluster_column)
            .expect("validated")
    }

    pub fn schema(&self) -> Schema {
        Schema::new(
            self.columns
                .iter()
                .map(|c| {
                    let t = match c.kind {
                        ColumnKind::Int => DataType::Int64,
                        ColumnKind::Float => DataType::Float64,
                        ColumnKind::String => DataType::Utf8,
                    };
                    Field::new(c.name.clone(), t)
                })
                .collect(),
        )
    }
}

struct Sampler {
    cumulative: Option<Vec<f64>>,
}

impl Sampler {
    fn new(spec: &ColumnSpec) -> Self {
        let cumulative = match spec.distribution {
            Distribution::Zipf { exponent } => {
                let n = spec.cardinality.min(1 << 20) as usize;
                let mut acc = 0.0;
                let mut v = Vec::with_capacity(n);
                for i in 1..=n {
                    acc += 1.0 / (i as f64).powf(exponent);
                    v.push(acc);
                }
                Some(v)
            }
            _ => None,
        };
        Sampler { cumulative }
    }

    fn draw(&self, spec: &ColumnSpec, row: usize, rng: &mut ChaCha8Rng) -> Value {
        if spec.null_fraction > 0.0 && rng.gen::<f64>() < spec.null_fraction {
            return Value::Null;
        }
        let n = match (&spec.distribution, &self.cumulative) {
            (Distribution::Sequential, _) => row as u64 % spec.cardinality,
            (Distribution::Zipf { .. }, Some(c)) => {
                let u = rng.gen::<f64>() * c[c.len() - 1];
                c.partition_point(|&x| x < u) as u64
            }
            _ => rng.gen_range(0..spec.cardinality),
        };
        match spec.kind {
            ColumnKind::Int => Value::Int(n as i64),
            ColumnKind::Float => Value::Float(n as f64 / 100.0),
            ColumnKind::String => Value::Str(format!("v{n:06}")),
        }
    }
}

/// Generates the rows: drawn, sorted on the cluster column, then
/// `round((1 - clustering) * rows)` random swaps.
pub fn generate_rows(spec: &GeneratorSpec) -> Result<Vec<Row>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let samplers: Vec<Sampler> = spec.columns.iter().map(Sampler::new).collect();
    let mut rows: Vec<Row> = (0..spec.rows)
        .map(|r| {
            spec.columns
                .iter()
                .zip(&samplers)
                .map(|(c, s)| s.draw(c, r, &mut rng))
                .collect()
        })
        .collect();
    let ci = spec
        .columns
        .iter()
        .position(|c| c.name == spec.cluster_column)
        .expect("validated");
    rows.sort_by(|a, b| a[ci].total_cmp(&b[ci]));
    let swaps = ((1.0 - spec.clustering) * spec.rows as f64).round() as usize;
    for _ in 0..swaps {
        let i = rng.gen_range(0..spec.rows);
        let j = rng.gen_range(0..spec.rows);
        rows.swap(i, j);
    }
    Ok(rows)
}

pub fn generate_table(spec: &GeneratorSpec) -> Result<Table> {
    build_table(spec.table.clone(), spec.schema(), generate_rows(spec)?, spec.partition_rows(), None)
}

/// The join table: `key` spread evenly over the cluster column's domain.
pub fn dim_table(spec: &GeneratorSpec) -> Result<(Schema, Vec<Row>)> {
    let schema = Schema::new(vec![Field::new("key", DataType::Int64), Field::new("label", DataType::Utf8)]);
    let card = spec.cluster_spec().cardinality;
    let n = spec.dim_rows as u64;
    let rows = (0..n)
        .map(|i| {
            let key = (i as u128 * card as u128 / n.max(1) as u128) as i64;
            vec![Value::Int(key), Value::Str(format!("d{i:05}"))]
        })
        .collect();
    Ok((schema, rows))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchQuery {
    pub label: String,
    pub kind: String,
    pub sql: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selectivity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: GeneratorSpec,
    pub tables: Vec<String>,
    pub queries: Vec<BenchQuery>,
}

/// Range predicates on the cluster column at each selectivity.
pub fn range_queries(spec: &GeneratorSpec) -> Vec<BenchQuery> {
    let card = spec.cluster_spec().cardinality as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5eed);
    spec.selectivities
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let width = (s * card).round().max(1.0);
            let lo = (rng.gen::<f64>() * (card - width).max(0.0)).floor();
            BenchQuery {
                label: format!("range_{i}"),
                kind: "filter".into(),
                sql: format!(
                    "SELECT COUNT(*) AS n FROM {} WHERE {} >= {} AND {} < {}",
                    spec.table,
                    spec.cluster_column,
                    lo as i64,
                    spec.cluster_column,
                    (lo + width) as i64
                ),
                selectivity: Some(s),
            }
        })
        .collect()
}

pub fn workload(spec: &GeneratorSpec) -> Vec<BenchQuery> {
    let (t, c, k) = (&spec.table, &spec.cluster_column, spec.k);
    let card = spec.cluster_spec().cardinality as i64;
    let q = |label: &str, kind: &str, sql: String| BenchQuery {
        label: label.into(),
        kind: kind.into(),
        sql,
        selectivity: None,
    };
    let mut out = range_queries(spec);
    out.push(q("limit_plain", "limit", format!("SELECT * FROM {t} LIMIT {k}")));
    out.push(q(
        "limit_filtered",
        "limit",
        format!("SELECT * FROM {t} WHERE {c} >= {} LIMIT {k}", card / 2),
    ));
    out.push(q("topk_desc", "topk", format!("SELECT * FROM {t} ORDER BY {c} DESC LIMIT {k}")));
    out.push(q(
        "topk_filtered",
        "topk",
        format!("SELECT * FROM {t} WHERE {c} < {} ORDER BY {c} ASC LIMIT {k}", card / 4),
    ));
    if let Some(s) = spec.columns.iter().find(|x| x.kind == ColumnKind::String) {
        out.push(q(
            "groupby_topk",
            "topk",
            format!(
                "SELECT {n}, COUNT(*) AS cnt FROM {t} GROUP BY {n} ORDER BY {n} LIMIT {k}",
                n = s.name
            ),
        ));
    }
    if spec.dim_rows > 0 {
        let hi = card / 100;
        out.push(q(
            "join_small_build",
            "join",
            format!("SELECT * FROM dims d JOIN {t} f ON d.key = f.{c} WHERE d.key < {hi}"),
        ));
        out.push(q(
            "join_empty_build",
            "join",
            format!("SELECT * FROM dims d JOIN {t} f ON d.key = f.{c} WHERE d.key < 0"),
        ));
    }
    out
}

/// Writes a catalog (`DIR/catalog`) and `DIR/manifest.json`.
pub fn generate_benchmark(spec: &GeneratorSpec, out: &Path) -> Result<Manifest> {
    let rows = generate_rows(spec)?;
    let catalog = out.join("catalog");
    fs::create_dir_all(&catalog)?;
    let meta = TableMeta {
        name: spec.table.clone(),
        partition_rows: spec.partition_rows(),
        sort_by: None,
    };
    save_table(&catalog, &meta, &spec.schema(), rows)?;
    let mut tables = vec![spec.table.clone()];
    if spec.dim_rows > 0 {
        let (schema, rows) = dim_table(spec)?;
        let meta = TableMeta {
            name: "dims".into(),
            partition_rows: 64,
            sort_by: None,
        };
        save_table(&catalog, &meta, &schema, rows)?;
        tables.push("dims".into());
    }
    let manifest = Manifest {
        spec: spec.clone(),
        tables,
        queries: workload(spec),
    };
    fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Fraction of partition pairs whose `[min, max]` ranges on `column` meet.
pub fn range_overlap_fraction(table: &Table, column: &str) -> Option<f64> {
    let i = table.schema().resolve(column).ok()?;
    let ranges: Vec<(&Value, &Value)> = table
        .partitions()
        .iter()
        .filter_map(|p| {
            let s = &p.stats()[i];
            Some((s.min.as_ref()?, s.max.as_ref()?))
        })
        .collect();
    let n = ranges.len();
    if n < 2 {
        return None;
    }
    let mut overlapping = 0usize;
    for a in 0..n {
        for b in a + 1..n {
            let (x, y) = (ranges[a], ranges[b]);
            if x.0.total_cmp(y.1).is_le() && y.0.total_cmp(x.1).is_le() {
                overlapping += 1;
            }
        }
    }
    Some(overlapping as f64 / (n * (n - 1) / 2) as f64)
}
