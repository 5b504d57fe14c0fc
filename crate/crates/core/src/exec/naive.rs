//! Reference executor without any pruning, used to check results.

use std::cmp::Ordering;
use std::collections::HashMap;

use super::operators::{aggregate_row, empty_aggregate_row, Groups};
use crate::error::Result;
use crate::expr::{BoundExpr, Expr};
use crate::partition::{Field, Row, Schema};
use crate::plan::{AggFunc, Catalog, JoinKind, Plan};
use crate::topk::value_rank;
use crate::value::{DataType, Value};

/// Evaluates `plan` row by row: full scans, nested-loop joins, full sorts.
pub fn naive_execute(plan: &Plan, catalog: &Catalog) -> Result<Vec<Row>> {
    run(plan, catalog).map(|(rows, _)| rows)
}

fn run(plan: &Plan, catalog: &Catalog) -> Result<(Vec<Row>, Schema)> {
    Ok(match plan {
        Plan::Scan { table, alias } => {
            let t = catalog.table(table)?;
            let schema = t.schema().qualified(alias.as_deref().unwrap_or(table));
            (t.rows().collect(), schema)
        }
        Plan::Filter { input, predicate } => {
            let (rows, schema) = run(input, catalog)?;
            let p = BoundExpr::bind(predicate, &schema)?;
            let mut out = Vec::new();
            for r in rows {
                if p.passes(&r)? {
                    out.push(r);
                }
            }
            (out, schema)
        }
        Plan::Project { input, exprs } => {
            let (rows, schema) = run(input, catalog)?;
            let mut fields = Vec::new();
            let mut bound = Vec::new();
            for e in exprs {
                fields.push(Field::new(e.name.clone(), e.expr.data_type(&schema)?));
                bound.push(BoundExpr::bind(&e.expr, &schema)?);
            }
            let out = rows
                .iter()
                .map(|r| bound.iter().map(|e| e.eval(r)).collect())
                .collect::<Result<Vec<Row>>>()?;
            (out, Schema::new(fields))
        }
        Plan::HashJoin {
            kind,
            build,
            probe,
            build_key,
            probe_key,
        } => {
            let (b_rows, bs) = run(build, catalog)?;
            let (p_rows, ps) = run(probe, catalog)?;
            let bk = BoundExpr::bind(build_key, &bs)?;
            let pk = BoundExpr::bind(probe_key, &ps)?;
            let b_keys = b_rows.iter().map(|r| bk.eval(r)).collect::<Result<Vec<_>>>()?;
            let mut matched = vec![false; b_rows.len()];
            let mut out = Vec::new();
            for p in &p_rows {
                let k = pk.eval(p)?;
                if k.is_null() {
                    continue;
                }
                for (i, b) in b_rows.iter().enumerate() {
                    if !b_keys[i].is_null() && b_keys[i] == k {
                        matched[i] = true;
                        let mut row = b.clone();
                        row.extend(p.iter().cloned());
                        out.push(row);
                    }
                }
            }
            if *kind == JoinKind::LeftOuter {
                for (b, m) in b_rows.iter().zip(&matched) {
                    if !m {
                        let mut row = b.clone();
                        row.extend(std::iter::repeat_n(Value::Null, ps.len()));
                        out.push(row);
                    }
                }
            }
            (out, bs.join(&ps))
        }
        Plan::GroupBy {
            input,
            keys,
            aggregates,
        } => {
            let (rows, schema) = run(input, catalog)?;
            let bound_keys = keys
                .iter()
                .map(|k| BoundExpr::bind(&k.expr, &schema))
                .collect::<Result<Vec<_>>>()?;
            let aggs = aggregates
                .iter()
                .map(|a| Ok((a.func, a.arg.as_ref().map(|e| BoundExpr::bind(e, &schema)).transpose()?)))
                .collect::<Result<Vec<_>>>()?;
            let mut groups = Groups::default();
            for r in &rows {
                let key = bound_keys.iter().map(|k| k.eval(r)).collect::<Result<Row>>()?;
                aggregate_row(&mut groups, key, r, &aggs)?;
            }
            let out = if groups.is_empty() && keys.is_empty() {
                vec![empty_aggregate_row(&aggs)]
            } else {
                groups.into_rows()
            };
            let mut fields = Vec::new();
            for k in keys {
                fields.push(Field::new(k.name.clone(), k.expr.data_type(&schema)?));
            }
            for a in aggregates {
                let ty = match (&a.arg, a.func) {
                    (Some(e), f) if f != AggFunc::Count => e.data_type(&schema)?,
                    _ => DataType::Int64,
                };
                fields.push(Field::new(a.name.clone(), ty));
            }
            (out, Schema::new(fields))
        }
        Plan::TopK {
            input,
            order,
            direction,
            k,
        } => {
            let (rows, schema) = run(input, catalog)?;
            let o = BoundExpr::bind(order, &schema)?;
            let mut keyed = rows
                .into_iter()
                .map(|r| Ok((o.eval(&r)?, r)))
                .collect::<Result<Vec<_>>>()?;
            keyed.sort_by(|a, b| value_rank(*direction, &a.0, &b.0));
            (keyed.into_iter().take(*k).map(|(_, r)| r).collect(), schema)
        }
        Plan::Limit {
            input,
            limit,
            offset,
        } => {
            let (rows, schema) = run(input, catalog)?;
            (rows.into_iter().skip(*offset).take(*limit).collect(), schema)
        }
    })
}

/// Removes every LIMIT and top-k operator.
pub fn strip_limits(plan: &Plan) -> Plan {
    match plan {
        Plan::Limit { input, .. } | Plan::TopK { input, .. } => strip_limits(input),
        Plan::Scan { .. } => plan.clone(),
        Plan::Filter { input, predicate } => Plan::Filter {
            input: Box::new(strip_limits(input)),
            predicate: predicate.clone(),
        },
        Plan::Project { input, exprs } => Plan::Project {
            input: Box::new(strip_limits(input)),
            exprs: exprs.clone(),
        },
        Plan::HashJoin {
            kind,
            build,
            probe,
            build_key,
            probe_key,
        } => Plan::HashJoin {
            kind: *kind,
            build: Box::new(strip_limits(build)),
            probe: Box::new(strip_limits(probe)),
            build_key: build_key.clone(),
            probe_key: probe_key.clone(),
        },
        Plan::GroupBy {
            input,
            keys,
            aggregates,
        } => Plan::GroupBy {
            input: Box::new(strip_limits(input)),
            keys: keys.clone(),
            aggregates: aggregates.clone(),
        },
    }
}

fn has_limit_or_topk(plan: &Plan) -> bool {
    matches!(plan, Plan::Limit { .. } | Plan::TopK { .. })
        || plan.inputs().into_iter().any(has_limit_or_topk)
}

fn approx_value(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Float(_), _) | (_, Value::Float(_)) => match (a.as_f64(), b.as_f64()) {
            (Some(x), Some(y)) if x.is_finite() && y.is_finite() => {
                (x - y).abs() <= 1e-9 * x.abs().max(y.abs()).max(1.0)
            }
            _ => a.total_cmp(b) == Ordering::Equal,
        },
        _ => a == b,
    }
}

fn approx_row(a: &[Value], b: &[Value]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| approx_value(x, y))
}

fn row_cmp(a: &Row, b: &Row) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(a.len().cmp(&b.len()))
}

fn fmt_row(r: &[Value]) -> String {
    let cells: Vec<String> = r.iter().map(|v| v.to_string()).collect();
    format!("({})", cells.join(", "))
}

/// Removes one row approximately equal to `row` from `pool`.
fn take_match(pool: &mut HashMap<Row, usize>, rest: &mut Vec<Row>, row: &Row) -> bool {
    if let Some(n) = pool.get_mut(row) {
        if *n > 0 {
            *n -= 1;
            return true;
        }
    }
    if let Some(i) = rest.iter().position(|r| approx_row(r, row)) {
        rest.swap_remove(i);
        return true;
    }
    false
}

/// Topmost top-k whose input holds no further LIMIT or top-k, as an order
/// column name.
fn deterministic_order_column(plan: &Plan) -> Option<&str> {
    match plan {
        Plan::TopK { input, order, .. } if !has_limit_or_topk(input) => match order {
            Expr::Column { name } => Some(name),
            _ => None,
        },
        Plan::TopK { .. } => None,
        Plan::Project { input, .. } | Plan::Limit { input, .. } | Plan::Filter { input, .. } => {
            deterministic_order_column(input)
        }
        _ => None,
    }
}

/// Checks `actual` against the reference result of `plan`.
///
/// Without LIMIT or top-k the results must be equal as multisets (floats to
/// a relative 1e-9). Otherwise the result may legally differ in which tied
/// rows it keeps, so it must have the reference cardinality, be contained
/// in the unlimited result and, where the top-k order column is in the
/// output, carry the same multiset of order values.
pub fn check_equivalent(plan: &Plan, catalog: &Catalog, actual: &[Row]) -> std::result::Result<(), String> {
    let err = |e: crate::Error| e.to_string();
    let expected = naive_execute(plan, catalog).map_err(err)?;
    if expected.len() != actual.len() {
        return Err(format!("expected {} rows, got {}", expected.len(), actual.len()));
    }
    if !has_limit_or_topk(plan) {
        let mut e = expected;
        let mut a = actual.to_vec();
        e.sort_by(row_cmp);
        a.sort_by(row_cmp);
        for (x, y) in e.iter().zip(&a) {
            if !approx_row(x, y) {
                return Err(format!("row mismatch: expected {} got {}", fmt_row(x), fmt_row(y)));
            }
        }
        return Ok(());
    }

    let unlimited = naive_execute(&strip_limits(plan), catalog).map_err(err)?;
    let has_float = unlimited.iter().flatten().any(|v| matches!(v, Value::Float(_)));
    let mut pool: HashMap<Row, usize> = HashMap::new();
    let mut rest = Vec::new();
    if has_float {
        rest = unlimited;
    } else {
        for r in unlimited {
            *pool.entry(r).or_default() += 1;
        }
    }
    for row in actual {
        if !take_match(&mut pool, &mut rest, row) {
            return Err(format!("row {} is not in the unlimited result", fmt_row(row)));
        }
    }

    if let Some(name) = deterministic_order_column(plan) {
        let schema = plan.schema(catalog).map_err(err)?;
        if let Ok(i) = schema.resolve(name) {
            let mut e: Vec<Value> = expected.iter().map(|r| r[i].clone()).collect();
            let mut a: Vec<Value> = actual.iter().map(|r| r[i].clone()).collect();
            e.sort();
            a.sort();
            if !e.iter().zip(&a).all(|(x, y)| approx_value(x, y)) {
                return Err(format!("top-k order values differ: expected {e:?}, got {a:?}"));
            }
        }
    }
    Ok(())
}
