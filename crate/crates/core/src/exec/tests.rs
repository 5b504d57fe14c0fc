use std::sync::Arc;

use super::*;
use crate::expr::{and, col, lit};
use crate::partition::{MicroPartition, Table};
use crate::plan::{AggFunc, Aggregate, Direction, JoinKind, NamedExpr};
use crate::value::{DataType, Value};

fn table(name: &str, fields: &[(&str, DataType)], parts: Vec<Vec<Row>>) -> Table {
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

fn r(species: &str, s: i64) -> Row {
    vec![Value::from(species), Value::Int(s)]
}

fn animals() -> Catalog {
    let t = table(
        "animals",
        &[("species", DataType::Utf8), ("s", DataType::Int64)],
        vec![
            vec![r("Snow Vole", 7), r("Brown Bear", 133), r("Gray Wolf", 82)],
            vec![r("Lynx", 71), r("Red Fox", 40), r("Alpine Bat", 6)],
            vec![r("Alpine Ibex", 101), r("Alpine Goat", 76), r("Alpine Sheep", 83)],
            vec![r("Europ. Mole", 4), r("Polecat", 16), r("Alpine Ibex", 97)],
        ],
    );
    let mut c = Catalog::new();
    c.insert(t);
    c
}

fn alpine() -> Plan {
    Plan::scan("animals").filter(and(vec![col("species").like("Alpine%"), col("s").gt_eq(lit(50))]))
}

fn ids(stats: &ScanStats, fate: Fate) -> Vec<usize> {
    let mut v: Vec<usize> = stats
        .partitions
        .iter()
        .filter(|p| p.fate == fate)
        .map(|p| p.partition_id)
        .collect();
    v.sort();
    v
}

#[test]
fn topk_walkthrough() {
    let c = animals();
    let plan = alpine().top_k(col("s"), Direction::Desc, 3);
    let cfg = ExecConfig {
        trace: true,
        ..ExecConfig::default()
    };
    let phys = plan_physical(&plan, &c, &cfg).unwrap();
    let scan = phys.scans()[0];
    assert_eq!(scan.scan_set, vec![3, 4, 2]);
    assert_eq!(scan.topk.as_ref().unwrap().initial_boundary, Some(Value::Int(76)));

    let (rows, stats) = execute(&plan, &c, &cfg).unwrap();
    let s: Vec<&Value> = rows.iter().map(|r| &r[1]).collect();
    assert_eq!(s, [&Value::Int(101), &Value::Int(97), &Value::Int(83)]);
    let scan = &stats.scans[0];
    assert_eq!(ids(scan, Fate::PrunedByFilter), [1]);
    assert_eq!(ids(scan, Fate::PrunedByTopk), [2]);
    assert_eq!(ids(scan, Fate::Scanned), [3, 4]);
    let t = &stats.topk_pruning[0];
    assert_eq!(t.plan_shape, Some(TopKShape::Scan));
    assert_eq!(t.initial_boundary_value, Some(Value::Int(76)));
    let order: Vec<usize> = stats.trace.iter().map(|e| e.partition_id).collect();
    assert_eq!(order, [3, 4, 2]);
    assert_eq!(stats.trace[2].boundary, Some(Value::Int(83)));
    stats.check_conservation().unwrap();
    check_equivalent(&plan, &c, &rows).unwrap();
}

#[test]
fn explain_shows_scan_set() {
    let text = explain(&alpine(), &animals(), &ExecConfig::default()).unwrap();
    assert!(text.contains("scan set {2, 3, 4}"), "{text}");
    assert!(text.contains("fully matching: {3}"), "{text}");
}

#[test]
fn limit_uses_full_match_partition() {
    let c = animals();
    let plan = alpine().limit(2, 0);
    let (rows, stats) = execute(&plan, &c, &ExecConfig::default()).unwrap();
    assert_eq!(rows.len(), 2);
    let scan = &stats.scans[0];
    assert_eq!(ids(scan, Fate::PrunedByLimit), [2, 4]);
    assert_eq!(ids(scan, Fate::Scanned), [3]);
    let l = stats.limit_pruning.unwrap();
    assert_eq!(l.reason, crate::limit::LimitReason::Applied);
    assert_eq!((l.partitions_before, l.partitions_after), (3, 1));
    check_equivalent(&plan, &c, &rows).unwrap();
}

#[test]
fn limit_halts_scan_early() {
    let c = animals();
    let plan = Plan::scan("animals").limit(2, 0);
    let (rows, stats) = execute(&plan, &c, &ExecConfig::default()).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(stats.scans[0].scanned, 1);
    assert_eq!(stats.scans[0].pruned_by_limit, 3);
    stats.check_conservation().unwrap();
}

#[test]
fn disabled_techniques_read_everything() {
    let c = animals();
    let plan = alpine().top_k(col("s"), Direction::Desc, 3);
    let (rows, stats) = execute(&plan, &c, &ExecConfig::all_disabled()).unwrap();
    assert_eq!(stats.scans[0].scanned, 4);
    check_equivalent(&plan, &c, &rows).unwrap();
}

fn shop() -> Catalog {
    let dims = table(
        "dims",
        &[("id", DataType::Int64), ("name", DataType::Utf8)],
        vec![vec![vec![Value::Int(5), "five".into()], vec![Value::Int(7), "seven".into()]]],
    );
    let facts = table(
        "facts",
        &[("dim", DataType::Int64), ("amount", DataType::Int64)],
        vec![
            vec![vec![Value::Int(1), Value::Int(10)], vec![Value::Int(2), Value::Int(20)]],
            vec![vec![Value::Int(5), Value::Int(30)], vec![Value::Int(6), Value::Int(40)]],
            vec![vec![Value::Int(7), Value::Int(50)], vec![Value::Null, Value::Int(60)]],
            vec![vec![Value::Int(9), Value::Int(70)], vec![Value::Int(12), Value::Int(80)]],
        ],
    );
    let mut c = Catalog::new();
    c.insert(dims);
    c.insert(facts);
    c
}

#[test]
fn join_prunes_probe_partitions() {
    let c = shop();
    let plan = Plan::join(
        JoinKind::Inner,
        Plan::scan("dims"),
        Plan::scan("facts"),
        col("dims.id"),
        col("facts.dim"),
    );
    let (rows, stats) = execute(&plan, &c, &ExecConfig::default()).unwrap();
    assert_eq!(rows.len(), 2);
    let probe = stats.scan("facts").unwrap();
    assert_eq!(ids(probe, Fate::PrunedByJoin), [1, 4]);
    let j = &stats.join_pruning[0];
    assert_eq!(j.summary_mode, "exact_set");
    assert_eq!((j.probe_partitions_before, j.probe_partitions_after), (4, 2));
    check_equivalent(&plan, &c, &rows).unwrap();
}

#[test]
fn outer_join_topk_is_replicated() {
    let c = shop();
    let plan = Plan::join(
        JoinKind::LeftOuter,
        Plan::scan("facts"),
        Plan::scan("dims"),
        col("facts.dim"),
        col("dims.id"),
    )
    .top_k(col("facts.amount"), Direction::Desc, 2);
    let (rows, stats) = execute(&plan, &c, &ExecConfig::default()).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(stats.topk_pruning[0].plan_shape, Some(TopKShape::OuterJoinBuild));
    assert!(stats.scan("facts").unwrap().pruned_by_topk >= 2);
    check_equivalent(&plan, &c, &rows).unwrap();
}

#[test]
fn group_topk() {
    let c = shop();
    let plan = Plan::scan("facts")
        .group_by(
            vec![NamedExpr::new(col("amount"), "amount")],
            vec![Aggregate {
                func: AggFunc::Count,
                arg: None,
                name: "n".into(),
            }],
        )
        .top_k(col("amount"), Direction::Asc, 3);
    let (rows, stats) = execute(&plan, &c, &ExecConfig::default()).unwrap();
    assert_eq!(rows.len(), 3);
    assert_eq!(stats.topk_pruning[0].plan_shape, Some(TopKShape::Aggregation));
    check_equivalent(&plan, &c, &rows).unwrap();
}

#[test]
fn empty_aggregate_yields_one_row() {
    let c = shop();
    let plan = Plan::scan("facts").filter(col("amount").gt(lit(1000))).group_by(
        vec![],
        vec![
            Aggregate {
                func: AggFunc::Count,
                arg: None,
                name: "n".into(),
            },
            Aggregate {
                func: AggFunc::Sum,
                arg: Some(col("amount")),
                name: "total".into(),
            },
        ],
    );
    let (rows, _) = execute(&plan, &c, &ExecConfig::default()).unwrap();
    assert_eq!(rows, vec![vec![Value::Int(0), Value::Null]]);
}

#[test]
fn parallel_workers_match() {
    let c = shop();
    let plan = Plan::scan("facts").top_k(col("amount"), Direction::Desc, 3);
    let one = execute(&plan, &c, &ExecConfig::default()).unwrap().0;
    let four = execute(
        &plan,
        &c,
        &ExecConfig {
            workers: 4,
            ..ExecConfig::default()
        },
    )
    .unwrap()
    .0;
    assert_eq!(one, four);
}
