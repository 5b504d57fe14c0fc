//! Random tables and queries shared by the acceptance and property suites.
#![allow(dead_code)]

use std::sync::Arc;

use prunekit::expr::{and, col, if_then_else, lit, or, Expr};
use prunekit::partition::{build_table, Field, MicroPartition, Row, Schema, Table};
use prunekit::plan::{AggFunc, Aggregate, Catalog, Direction, JoinKind, NamedExpr, Plan};
use prunekit::value::{DataType, Value};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub type TestRng = ChaCha8Rng;

pub const SPECIES: &[&str] = &[
    "Alpine Bat",
    "Alpine Goat",
    "Alpine Ibex",
    "Alpine Sheep",
    "Brown Bear",
    "Europ. Mole",
    "Gray Wolf",
    "Lynx",
    "Polecat",
    "Red Fox",
    "Snow Vole",
];

/// Builds a table from explicit partitions, ids from 1.
pub fn table_from_parts(name: &str, fields: &[(&str, DataType)], parts: Vec<Vec<Row>>) -> Table {
    let schema = Arc::new(Schema::new(
        fields.iter().map(|(n, t)| Field::new(*n, *t)).collect(),
    ));
    let parts = parts
        .into_iter()
        .enumerate()
        .map(|(i, rows)| {
            let cols = (0..fields.len())
                .map(|c| rows.iter().map(|r| r[c].clone()).collect())
                .collect();
            MicroPartition::new(i + 1, schema.clone(), cols).unwrap()
        })
        .collect();
    Table::from_partitions(name, schema, parts).unwrap()
}

/// The four-partition sightings table with columns `species` and `s`.
pub fn sightings_table() -> Table {
    let r = |sp: &str, s: i64| vec![Value::from(sp), Value::Int(s)];
    table_from_parts(
        "tracking_data",
        &[("species", DataType::Utf8), ("s", DataType::Int64)],
        vec![
            vec![r("Snow Vole", 7), r("Brown Bear", 133), r("Gray Wolf", 82)],
            vec![r("Lynx", 71), r("Red Fox", 40), r("Alpine Bat", 6)],
            vec![r("Alpine Ibex", 101), r("Alpine Goat", 76), r("Alpine Sheep", 83)],
            vec![r("Europ. Mole", 4), r("Polecat", 16), r("Alpine Ibex", 97)],
        ],
    )
}

pub fn sightings_predicate() -> Expr {
    and(vec![col("species").like("Alpine%"), col("s").gt_eq(lit(50))])
}

fn maybe_null(rng: &mut TestRng, p: f64, draw: impl FnOnce(&mut TestRng) -> Value) -> Value {
    if rng.gen_bool(p) {
        Value::Null
    } else {
        draw(rng)
    }
}

/// Fact table `t(id, a, b, c, s)`: up to 64 partitions of up to 100 rows,
/// laid out sorted on `a`, on `s`, or randomly.
pub fn fact_table(rng: &mut TestRng) -> Table {
    let parts = rng.gen_range(1..=64);
    let per = rng.gen_range(1..=100);
    let rows_n = if rng.gen_bool(0.1) {
        rng.gen_range(0..=parts * per)
    } else {
        parts * per
    };
    let null_p = *[0.0, 0.0, 0.05, 0.3].choose(rng).unwrap();
    let a_dom = *[10i64, 100, 1000].choose(rng).unwrap();
    let rows: Vec<Row> = (0..rows_n)
        .map(|i| {
            vec![
                Value::Int(i as i64),
                maybe_null(rng, null_p, |r| Value::Int(r.gen_range(0..a_dom))),
                Value::Int(rng.gen_range(-5..20)),
                maybe_null(rng, null_p, |r| Value::Float(r.gen_range(-500..500) as f64 / 10.0)),
                maybe_null(rng, null_p, |r| Value::from(*SPECIES.choose(r).unwrap())),
            ]
        })
        .collect();
    let schema = Schema::new(vec![
        Field::new("id", DataType::Int64),
        Field::new("a", DataType::Int64),
        Field::new("b", DataType::Int64),
        Field::new("c", DataType::Float64),
        Field::new("s", DataType::Utf8),
    ]);
    let sort: Option<Vec<String>> = match rng.gen_range(0..4) {
        0 => None,
        1 | 2 => Some(vec!["a".into()]),
        _ => Some(vec!["s".into(), "a".into()]),
    };
    build_table("t", schema, rows, per.max(1), sort.as_deref()).unwrap()
}

/// Small table `u(k, w, label)`, sometimes empty.
pub fn dim_table(rng: &mut TestRng) -> Table {
    let n = if rng.gen_bool(0.1) { 0 } else { rng.gen_range(1..=200) };
    let k_dom = *[10i64, 100, 1000].choose(rng).unwrap();
    let rows: Vec<Row> = (0..n)
        .map(|_| {
            vec![
                maybe_null(rng, 0.05, |r| Value::Int(r.gen_range(0..k_dom))),
                Value::Int(rng.gen_range(0..50)),
                Value::from(*SPECIES.choose(rng).unwrap()),
            ]
        })
        .collect();
    let schema = Schema::new(vec![
        Field::new("k", DataType::Int64),
        Field::new("w", DataType::Int64),
        Field::new("label", DataType::Utf8),
    ]);
    let sort = rng.gen_bool(0.5).then(|| vec!["k".to_string()]);
    build_table("u", schema, rows, rng.gen_range(1..=50), sort.as_deref()).unwrap()
}

pub fn catalog(rng: &mut TestRng) -> Catalog {
    let mut c = Catalog::new();
    c.insert(fact_table(rng));
    c.insert(dim_table(rng));
    c
}

fn int_lit(rng: &mut TestRng) -> Expr {
    lit(rng.gen_range(-10i64..1000))
}

fn num_lit(rng: &mut TestRng) -> Expr {
    if rng.gen_bool(0.3) {
        lit(rng.gen_range(-60.0f64..60.0).round() / 2.0)
    } else {
        lit(rng.gen_range(-60i64..120))
    }
}

fn q(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Numeric expression over `t` columns.
pub fn num_expr(rng: &mut TestRng, p: &str, depth: u32) -> Expr {
    let leaf = |rng: &mut TestRng| match rng.gen_range(0..5) {
        0 => col(q(p, "a")),
        1 => col(q(p, "b")),
        2 => col(q(p, "c")),
        3 => col(q(p, "id")),
        _ => num_lit(rng),
    };
    if depth == 0 || rng.gen_bool(0.6) {
        return leaf(rng);
    }
    match rng.gen_range(0..6) {
        0 => num_expr(rng, p, depth - 1).add(num_expr(rng, p, depth - 1)),
        1 => num_expr(rng, p, depth - 1).sub(leaf(rng)),
        2 => leaf(rng).mul(num_lit(rng)),
        3 => num_expr(rng, p, depth - 1).div(leaf(rng)),
        4 => if_then_else(
            pred(rng, p, 0),
            num_expr(rng, p, depth - 1),
            num_expr(rng, p, depth - 1),
        ),
        _ => leaf(rng),
    }
}

/// Boolean predicate over `t` columns (qualified by `p` when non-empty).
pub fn pred(rng: &mut TestRng, p: &str, depth: u32) -> Expr {
    if depth > 0 && rng.gen_bool(0.45) {
        let n = rng.gen_range(2..=3);
        let kids = (0..n).map(|_| pred(rng, p, depth - 1)).collect();
        return match rng.gen_range(0..5) {
            0 | 1 | 2 => and(kids),
            3 => or(kids),
            _ => pred(rng, p, depth - 1).not(),
        };
    }
    let cmp = |rng: &mut TestRng, lhs: Expr, rhs: Expr| match rng.gen_range(0..6) {
        0 => lhs.lt(rhs),
        1 => lhs.lt_eq(rhs),
        2 => lhs.eq(rhs),
        3 => lhs.not_eq(rhs),
        4 => lhs.gt_eq(rhs),
        _ => lhs.gt(rhs),
    };
    match rng.gen_range(0..12) {
        0..=3 => {
            let c = col(q(p, ["a", "b", "id"].choose(rng).unwrap()));
            let l = int_lit(rng);
            cmp(rng, c, l)
        }
        4 => {
            let l = num_lit(rng);
            cmp(rng, col(q(p, "c")), l)
        }
        5 => {
            let lo = rng.gen_range(0i64..500);
            let hi = lo + rng.gen_range(0..200);
            and(vec![col(q(p, "a")).gt_eq(lit(lo)), col(q(p, "a")).lt_eq(lit(hi))])
        }
        6 => {
            let pat = ["Alpine%", "Al%", "B%", "%Fox", "Lynx", "Snow Vole", "%o%", "Alpine _bex"]
                .choose(rng)
                .unwrap();
            col(q(p, "s")).like(*pat)
        }
        7 => {
            let sp = SPECIES.choose(rng).unwrap();
            let c = col(q(p, "s"));
            cmp(rng, c, lit(*sp))
        }
        8 => {
            let c = *["a", "c", "s"].choose(rng).unwrap();
            let e = col(q(p, c)).is_null();
            if rng.gen_bool(0.5) {
                e.not()
            } else {
                e
            }
        }
        9 => {
            let n = rng.gen_range(1..5);
            let vals = (0..n).map(|_| Value::Int(rng.gen_range(0..200))).collect();
            col(q(p, "a")).in_list(vals)
        }
        _ => {
            let lhs = num_expr(rng, p, 2);
            let rhs = num_lit(rng);
            cmp(rng, lhs, rhs)
        }
    }
}

fn maybe_filter(rng: &mut TestRng, plan: Plan, p: &str) -> Plan {
    if rng.gen_bool(0.8) {
        plan.filter(pred(rng, p, 2))
    } else {
        plan
    }
}

fn direction(rng: &mut TestRng) -> Direction {
    if rng.gen_bool(0.6) {
        Direction::Desc
    } else {
        Direction::Asc
    }
}

fn order_expr(rng: &mut TestRng, p: &str) -> Expr {
    match rng.gen_range(0..8) {
        0 | 1 => col(q(p, "a")),
        2 => col(q(p, "c")),
        3 => col(q(p, "id")),
        4 => col(q(p, "s")),
        5 => col(q(p, "b")),
        _ => num_expr(rng, p, 2),
    }
}

fn dim_pred(rng: &mut TestRng) -> Expr {
    match rng.gen_range(0..4) {
        0 => col("u.k").lt(lit(rng.gen_range(0i64..1000))),
        1 => col("u.w").gt(lit(rng.gen_range(0i64..50))),
        2 => col("u.label").like("Alpine%"),
        _ => col("u.k").gt(lit(5000i64)),
    }
}

/// A random plan over the tables from [`catalog`].
pub fn query(rng: &mut TestRng) -> Plan {
    let k = |rng: &mut TestRng| {
        if rng.gen_bool(0.1) {
            0
        } else {
            rng.gen_range(1..=40)
        }
    };
    match rng.gen_range(0..10) {
        0 => maybe_filter(rng, Plan::scan("t"), ""),
        1 | 2 => {
            let kk = k(rng);
            let off = if rng.gen_bool(0.3) { rng.gen_range(0..10) } else { 0 };
            maybe_filter(rng, Plan::scan("t"), "").limit(kk, off)
        }
        3 | 4 => {
            let base = maybe_filter(rng, Plan::scan("t"), "");
            let (o, d, kk) = (order_expr(rng, ""), direction(rng), k(rng));
            let plan = base.top_k(o, d, kk);
            if rng.gen_bool(0.2) {
                let off = rng.gen_range(0..5);
                plan.limit(kk.saturating_sub(off), off)
            } else {
                plan
            }
        }
        5 => {
            let key = *["b", "s", "a"].choose(rng).unwrap();
            let aggs = vec![
                Aggregate {
                    func: AggFunc::Count,
                    arg: None,
                    name: "n".into(),
                },
                Aggregate {
                    func: *[AggFunc::Sum, AggFunc::Min, AggFunc::Max].choose(rng).unwrap(),
                    arg: Some(col("c")),
                    name: "m".into(),
                },
            ];
            let g = maybe_filter(rng, Plan::scan("t"), "")
                .group_by(vec![NamedExpr::new(col(key), key)], aggs);
            match rng.gen_range(0..4) {
                0 => g,
                1 => g.top_k(col("n"), direction(rng), k(rng)),
                _ => g.top_k(col(key), direction(rng), k(rng)),
            }
        }
        6 | 7 => {
            // inner join, small dim table builds
            let mut build = Plan::scan("u");
            if rng.gen_bool(0.5) {
                build = build.filter(dim_pred(rng));
            }
            let probe = maybe_filter(rng, Plan::scan("t"), "t");
            let j = Plan::join(JoinKind::Inner, build, probe, col("u.k"), col("t.a"));
            match rng.gen_range(0..4) {
                0 => j,
                1 => j.limit(k(rng), 0),
                2 => j.top_k(order_expr(rng, "t"), direction(rng), k(rng)),
                _ => j.top_k(col("u.w"), direction(rng), k(rng)),
            }
        }
        8 => {
            // left outer join preserving the fact table
            let build = maybe_filter(rng, Plan::scan("t"), "t");
            let mut probe = Plan::scan("u");
            if rng.gen_bool(0.5) {
                probe = probe.filter(dim_pred(rng));
            }
            let j = Plan::join(JoinKind::LeftOuter, build, probe, col("t.a"), col("u.k"));
            if rng.gen_bool(0.7) {
                j.top_k(order_expr(rng, "t"), direction(rng), k(rng))
            } else {
                j
            }
        }
        _ => {
            let base = maybe_filter(rng, Plan::scan("t"), "");
            let e = num_expr(rng, "", 1);
            base.project(vec![NamedExpr::new(col("id"), "id"), NamedExpr::new(e, "x")])
                .limit(k(rng), 0)
        }
    }
}
