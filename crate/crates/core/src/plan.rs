//! Logical query plans and the table catalog they run against.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::partition::{Field, Schema, Table};
use crate::value::DataType;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Asc,
    Desc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JoinKind {
    Inner,
    /// Keeps every row of the build (left) input.
    LeftOuter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggFunc {
    Count,
    Sum,
    Min,
    Max,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedExpr {
    pub expr: Expr,
    pub name: String,
}

impl NamedExpr {
    pub fn new(expr: Expr, name: impl Into<String>) -> Self {
        NamedExpr {
            expr,
            name: name.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub func: AggFunc,
    /// `None` means `COUNT(*)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arg: Option<Expr>,
    pub name: String,
}

/// Logical operator tree. Serializes as JSON objects tagged by `"op"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Plan {
    Scan {
        table: String,
        /// Qualifier for output column names; defaults to the table name.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        alias: Option<String>,
    },
    Filter {
        input: Box<Plan>,
        predicate: Expr,
    },
    Project {
        input: Box<Plan>,
        exprs: Vec<NamedExpr>,
    },
    /// Equi-join. The build input is drained into a hash table first.
    HashJoin {
        kind: JoinKind,
        build: Box<Plan>,
        probe: Box<Plan>,
        build_key: Expr,
        probe_key: Expr,
    },
    GroupBy {
        input: Box<Plan>,
        keys: Vec<NamedExpr>,
        aggregates: Vec<Aggregate>,
    },
    /// First `k` rows by `order`, nulls last.
    TopK {
        input: Box<Plan>,
        order: Expr,
        direction: Direction,
        k: usize,
    },
    Limit {
        input: Box<Plan>,
        limit: usize,
        #[serde(default)]
        offset: usize,
    },
}

impl Plan {
    pub fn scan(table: impl Into<String>) -> Plan {
        Plan::Scan {
            table: table.into(),
            alias: None,
        }
    }

    pub fn filter(self, predicate: Expr) -> Plan {
        Plan::Filter {
            input: Box::new(self),
            predicate,
        }
    }

    pub fn project(self, exprs: Vec<NamedExpr>) -> Plan {
        Plan::Project {
            input: Box::new(self),
            exprs,
        }
    }

    pub fn top_k(self, order: Expr, direction: Direction, k: usize) -> Plan {
        Plan::TopK {
            input: Box::new(self),
            order,
            direction,
            k,
        }
    }

    pub fn limit(self, limit: usize, offset: usize) -> Plan {
        Plan::Limit {
            input: Box::new(self),
            limit,
            offset,
        }
    }

    pub fn join(kind: JoinKind, build: Plan, probe: Plan, build_key: Expr, probe_key: Expr) -> Plan {
        Plan::HashJoin {
            kind,
            build: Box::new(build),
            probe: Box::new(probe),
            build_key,
            probe_key,
        }
    }

    pub fn group_by(self, keys: Vec<NamedExpr>, aggregates: Vec<Aggregate>) -> Plan {
        Plan::GroupBy {
            input: Box::new(self),
            keys,
            aggregates,
        }
    }

    pub fn inputs(&self) -> Vec<&Plan> {
        match self {
            Plan::Scan { .. } => vec![],
            Plan::Filter { input, .. }
            | Plan::Project { input, .. }
            | Plan::GroupBy { input, .. }
            | Plan::TopK { input, .. }
            | Plan::Limit { input, .. } => vec![input],
            Plan::HashJoin { build, probe, .. } => vec![build, probe],
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Plan::Scan { .. } => "Scan",
            Plan::Filter { .. } => "Filter",
            Plan::Project { .. } => "Project",
            Plan::HashJoin { .. } => "HashJoin",
            Plan::GroupBy { .. } => "GroupBy",
            Plan::TopK { .. } => "TopK",
            Plan::Limit { .. } => "Limit",
        }
    }

    /// Table scans in pre-order (build before probe). A scan's position in
    /// this list is its scan index.
    pub fn scans(&self) -> Vec<(&str, &str)> {
        let mut out = Vec::new();
        self.collect_scans(&mut out);
        out
    }

    fn collect_scans<'a>(&'a self, out: &mut Vec<(&'a str, &'a str)>) {
        if let Plan::Scan { table, alias } = self {
            out.push((table, alias.as_deref().unwrap_or(table)));
        }
        for i in self.inputs() {
            i.collect_scans(out);
        }
    }

    /// Output schema; type-checks every expression on the way.
    pub fn schema(&self, catalog: &Catalog) -> Result<Schema> {
        match self {
            Plan::Scan { table, alias } => {
                let t = catalog.table(table)?;
                Ok(t.schema().qualified(alias.as_deref().unwrap_or(table)))
            }
            Plan::Filter { input, predicate } => {
                let s = input.schema(catalog)?;
                match predicate.data_type(&s)? {
                    DataType::Bool | DataType::Null => Ok(s),
                    t => Err(Error::Type(format!("filter predicate has type {t}"))),
                }
            }
            Plan::Project { input, exprs } => {
                let s = input.schema(catalog)?;
                let fields = exprs
                    .iter()
                    .map(|e| Ok(Field::new(e.name.clone(), e.expr.data_type(&s)?)))
                    .collect::<Result<Vec<_>>>()?;
                unique_names(&fields)?;
                Ok(Schema::new(fields))
            }
            Plan::HashJoin {
                build,
                probe,
                build_key,
                probe_key,
                ..
            } => {
                let (b, p) = (build.schema(catalog)?, probe.schema(catalog)?);
                let (bt, pt) = (build_key.data_type(&b)?, probe_key.data_type(&p)?);
                if !bt.comparable_with(pt) || bt == DataType::Bool {
                    return Err(Error::Type(format!("join keys {bt} and {pt} do not match")));
                }
                Ok(b.join(&p))
            }
            Plan::GroupBy {
                input,
                keys,
                aggregates,
            } => {
                let s = input.schema(catalog)?;
                let mut fields = Vec::new();
                for k in keys {
                    fields.push(Field::new(k.name.clone(), k.expr.data_type(&s)?));
                }
                for a in aggregates {
                    let arg = a.arg.as_ref().map(|e| e.data_type(&s)).transpose()?;
                    let ty = match (a.func, arg) {
                        (AggFunc::Count, _) => DataType::Int64,
                        (_, None) => {
                            return Err(Error::Type(format!("{:?} needs an argument", a.func)))
                        }
                        (AggFunc::Sum, Some(t)) if t.is_numeric() => t,
                        (AggFunc::Sum, Some(DataType::Null)) => DataType::Int64,
                        (AggFunc::Sum, Some(t)) => {
                            return Err(Error::Type(format!("SUM over {t}")));
                        }
                        (_, Some(t)) => t,
                    };
                    fields.push(Field::new(a.name.clone(), ty));
                }
                unique_names(&fields)?;
                Ok(Schema::new(fields))
            }
            Plan::TopK { input, order, .. } => {
                let s = input.schema(catalog)?;
                order.data_type(&s)?;
                Ok(s)
            }
            Plan::Limit { input, .. } => input.schema(catalog),
        }
    }

    /// Indented one-line-per-operator rendering.
    pub fn display_tree(&self) -> String {
        let mut out = String::new();
        self.render(0, &mut out);
        out
    }

    fn render(&self, depth: usize, out: &mut String) {
        let pad = "  ".repeat(depth);
        let line = match self {
            Plan::Scan { table, alias } => match alias {
                Some(a) if a != table => format!("Scan {table} AS {a}"),
                _ => format!("Scan {table}"),
            },
            Plan::Filter { predicate, .. } => format!("Filter {predicate}"),
            Plan::Project { exprs, .. } => format!(
                "Project {}",
                exprs
                    .iter()
                    .map(|e| format!("{} AS {}", e.expr, e.name))
                    .collect::<Vec<_>>()
                    .join(", ")
            ),
            Plan::HashJoin {
                kind,
                build_key,
                probe_key,
                ..
            } => format!("HashJoin {kind:?} {build_key} = {probe_key}"),
            Plan::GroupBy {
                keys, aggregates, ..
            } => format!(
                "GroupBy [{}] [{}]",
                keys.iter().map(|k| k.name.as_str()).collect::<Vec<_>>().join(", "),
                aggregates.iter().map(|a| a.name.as_str()).collect::<Vec<_>>().join(", ")
            ),
            Plan::TopK {
                order, direction, k, ..
            } => format!("TopK {order} {direction:?} k={k}"),
            Plan::Limit { limit, offset, .. } => format!("Limit {limit} offset {offset}"),
        };
        out.push_str(&pad);
        out.push_str(&line);
        out.push('\n');
        for i in self.inputs() {
            i.render(depth + 1, out);
        }
    }
}

fn unique_names(fields: &[Field]) -> Result<()> {
    for (i, f) in fields.iter().enumerate() {
        if fields[..i].iter().any(|g| g.name == f.name) {
            return Err(Error::Bind(format!("duplicate output column '{}'", f.name)));
        }
    }
    Ok(())
}

/// Named tables available to queries.
#[derive(Debug, Clone, Default)]
pub struct Catalog {
    tables: BTreeMap<String, Arc<Table>>,
}

impl Catalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, table: Table) {
        self.tables.insert(table.name.clone(), Arc::new(table));
    }

    pub fn table(&self, name: &str) -> Result<&Arc<Table>> {
        self.tables
            .get(name)
            .ok_or_else(|| Error::Bind(format!("unknown table '{name}'")))
    }

    pub fn tables(&self) -> impl Iterator<Item = &Arc<Table>> {
        self.tables.values()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{col, lit};
    use crate::partition::build_table;
    use crate::value::Value;

    fn catalog() -> Catalog {
        let schema = Schema::new(vec![
            Field::new("species", DataType::Utf8),
            Field::new("s", DataType::Int64),
        ]);
        let rows = vec![vec![Value::from("Lynx"), Value::Int(71)]];
        let mut c = Catalog::new();
        c.insert(build_table("animals", schema, rows, 3, None).unwrap());
        c
    }

    #[test]
    fn schema_and_json_roundtrip() {
        let c = catalog();
        let p = Plan::scan("animals")
            .filter(col("s").gt_eq(lit(50)))
            .top_k(col("s"), Direction::Desc, 3)
            .limit(3, 0);
        let s = p.schema(&c).unwrap();
        assert_eq!(s.columns[1].name, "animals.s");
        let json = serde_json::to_string(&p).unwrap();
        assert!(json.starts_with(r#"{"op":"limit""#), "{json}");
        assert_eq!(serde_json::from_str::<Plan>(&json).unwrap(), p);
    }

    #[test]
    fn validation_errors() {
        let c = catalog();
        assert!(Plan::scan("nope").schema(&c).is_err());
        assert!(Plan::scan("animals").filter(col("s")).schema(&c).is_err());
        let agg = Plan::scan("animals").group_by(
            vec![NamedExpr::new(col("species"), "species")],
            vec![Aggregate {
                func: AggFunc::Sum,
                arg: Some(col("species")),
                name: "x".into(),
            }],
        );
        assert!(agg.schema(&c).is_err());
        let join = Plan::join(
            JoinKind::Inner,
            Plan::scan("animals"),
            Plan::Scan {
                table: "animals".into(),
                alias: Some("b".into()),
            },
            col("animals.s"),
            col("b.species"),
        );
        assert!(join.schema(&c).is_err());
    }

    #[test]
    fn scans_in_preorder() {
        let p = Plan::join(
            JoinKind::LeftOuter,
            Plan::scan("a"),
            Plan::Scan {
                table: "b".into(),
                alias: Some("x".into()),
            },
            col("k"),
            col("k"),
        );
        assert_eq!(p.scans(), vec![("a", "a"), ("b", "x")]);
    }
}
