//! Browser playground: generate a clustered table, run SQL against it with
//! pruning toggles, and inspect the annotated plan.

use prunekit::bench::{dim_table, generate_table, workload, GeneratorSpec};
use prunekit::exec::{execute, explain, ExecConfig, Technique};
use prunekit::partition::build_table;
use prunekit::plan::Catalog;
use prunekit::sql::parse_sql;
use prunekit::stats_report::pruning_ratio;
use prunekit::value::Value;
use prunekit::Result;
use serde_json::{json, Value as Json};
use wasm_bindgen::prelude::*;

/// Rows shown in the result grid; the rest is only counted.
const MAX_ROWS: usize = 200;

#[wasm_bindgen]
pub struct Playground {
    catalog: Catalog,
    spec: GeneratorSpec,
}

fn js(e: prunekit::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn cell(v: &Value) -> Json {
    match v {
        Value::Null => Json::Null,
        Value::Bool(b) => json!(b),
        Value::Int(i) => json!(i),
        Value::Float(f) => json!(f),
        Value::Str(s) => json!(s),
    }
}

fn config(disabled: &str) -> ExecConfig {
    let mut config = ExecConfig::default();
    config.disabled.extend(
        disabled
            .split(',')
            .filter_map(|t| Technique::parse(t.trim())),
    );
    config
}

impl Playground {
    pub fn build(rows: usize, partitions: usize, clustering: f64, seed: u64) -> Result<Playground> {
        let mut spec = GeneratorSpec::example(rows, partitions, clustering, seed);
        spec.dim_rows = 50;
        let mut catalog = Catalog::new();
        catalog.insert(generate_table(&spec)?);
        let (schema, dims) = dim_table(&spec)?;
        catalog.insert(build_table("dims", schema, dims, 16, None)?);
        Ok(Playground { catalog, spec })
    }

    /// Result rows plus per-technique pruning stats as JSON.
    pub fn run_json(&self, sql: &str, disabled: &str) -> Result<String> {
        let plan = parse_sql(sql, &self.catalog)?;
        let (rows, stats) = execute(&plan, &self.catalog, &config(disabled))?;
        let schema = plan.schema(&self.catalog)?;
        let ratios = pruning_ratio(&stats);
        let pruned: Vec<Json> = Technique::ALL
            .iter()
            .map(|&t| json!({"technique": t.name(), "partitions": stats.pruned(t)}))
            .collect();
        let out = json!({
            "columns": schema.columns.iter().map(|f| f.name.clone()).collect::<Vec<_>>(),
            "rows": rows.iter().take(MAX_ROWS).map(|r| r.iter().map(cell).collect::<Vec<_>>()).collect::<Vec<_>>(),
            "row_count": rows.len(),
            "partitions_total": stats.partitions_total(),
            "scanned": stats.scanned(),
            "pruned": pruned,
            "pruning_ratio": ratios.overall,
            "scans": stats.scans,
        });
        Ok(out.to_string())
    }

    pub fn explain_text(&self, sql: &str, disabled: &str) -> Result<String> {
        let plan = parse_sql(sql, &self.catalog)?;
        explain(&plan, &self.catalog, &config(disabled))
    }

    /// Min/max of the cluster column per partition.
    pub fn zone_maps_json(&self) -> Result<String> {
        let table = self.catalog.table(&self.spec.table)?;
        let parts: Vec<Json> = table
            .partitions()
            .iter()
            .map(|p| {
                let s = p.stats_for(&self.spec.cluster_column);
                json!({
                    "id": p.id,
                    "rows": p.num_rows(),
                    "min": s.and_then(|s| s.min.as_ref()).map(cell),
                    "max": s.and_then(|s| s.max.as_ref()).map(cell),
                })
            })
            .collect();
        Ok(json!({"column": self.spec.cluster_column, "partitions": parts}).to_string())
    }

    pub fn sample_queries(&self) -> Vec<String> {
        workload(&self.spec).into_iter().map(|q| q.sql).collect()
    }
}

#[wasm_bindgen]
impl Playground {
    /// Generates `facts(ts, category, amount, user_id)` and a small `dims(key, label)`.
    #[wasm_bindgen(constructor)]
    pub fn new(rows: usize, partitions: usize, clustering: f64, seed: u32) -> std::result::Result<Playground, JsError> {
        Playground::build(rows, partitions, clustering, seed as u64).map_err(js)
    }

    pub fn run(&self, sql: &str, disabled: &str) -> std::result::Result<String, JsError> {
        self.run_json(sql, disabled).map_err(js)
    }

    pub fn explain(&self, sql: &str, disabled: &str) -> std::result::Result<String, JsError> {
        self.explain_text(sql, disabled).map_err(js)
    }

    #[wasm_bindgen(js_name = zoneMaps)]
    pub fn zone_maps(&self) -> std::result::Result<String, JsError> {
        self.zone_maps_json().map_err(js)
    }

    #[wasm_bindgen(js_name = sampleQueries)]
    pub fn sample_queries_joined(&self) -> String {
        self.sample_queries().join("\n")
    }
}
