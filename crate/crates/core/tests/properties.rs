mod common;

use std::cmp::Ordering;
use std::collections::BTreeSet;

use common::TestRng;
use proptest::prelude::*;
use prunekit::exec::{check_equivalent, execute, ExecConfig, Technique};
use prunekit::expr::{and, col, derive_interval, eval_meta, eval_row, lit, negate, or, Expr, TriState};
use prunekit::join_pruning::{prune_probe, summarize_build, BuildSummary};
use prunekit::limit::{limit_decision, LimitReason};
use prunekit::partition::{build_table, compute_stats, ColumnStats, Field, Row, Schema};
use prunekit::plan::{Catalog, Direction, Plan};
use prunekit::pruning_tree::{prune_scan_set, PruningTree, TreeConfig};
use prunekit::sql::parse_sql;
use prunekit::stats_report::{flow_report, pruning_ratio};
use prunekit::topk::{init_boundary, value_rank, ScanOrderStrategy, TopKState};
use prunekit::value::{DataType, Value};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

fn rng(seed: u64) -> TestRng {
    TestRng::seed_from_u64(seed)
}

fn row_cmp(a: &Row, b: &Row) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

fn passes(e: &Expr, schema: &Schema, row: &[Value]) -> bool {
    eval_row(e, schema, row).unwrap() == Value::Bool(true)
}

fn direction(r: &mut TestRng) -> Direction {
    if r.gen_bool(0.5) {
        Direction::Desc
    } else {
        Direction::Asc
    }
}

/// Predicates without arithmetic: NULL only ever comes from NULL data.
fn plain_pred(r: &mut TestRng, depth: u32) -> Expr {
    if depth > 0 && r.gen_bool(0.5) {
        let kids: Vec<Expr> = (0..r.gen_range(2..=3)).map(|_| plain_pred(r, depth - 1)).collect();
        return match r.gen_range(0..3) {
            0 => and(kids),
            1 => or(kids),
            _ => plain_pred(r, depth - 1).not(),
        };
    }
    let c = col(*["a", "b", "id"].choose(r).unwrap());
    let v = lit(r.gen_range(-10i64..400));
    match r.gen_range(0..9) {
        0 => c.lt(v),
        1 => c.lt_eq(v),
        2 => c.eq(v),
        3 => c.not_eq(v),
        4 => c.gt(v),
        5 => col("s").like(*["Alpine%", "B%", "%Fox", "Lynx"].choose(r).unwrap()),
        6 => col("s").starts_with(*["Al", "Alpine ", "S"].choose(r).unwrap()),
        7 => col("a").in_list((0..r.gen_range(1..4)).map(|_| Value::Int(r.gen_range(0..100))).collect()),
        _ => col("c").gt_eq(lit(r.gen_range(-50.0f64..50.0))),
    }
}

fn permute(e: &Expr, r: &mut TestRng) -> Expr {
    match e {
        Expr::And { children } | Expr::Or { children } => {
            let mut kids: Vec<Expr> = children.iter().map(|c| permute(c, r)).collect();
            kids.shuffle(r);
            if matches!(e, Expr::And { .. }) {
                and(kids)
            } else {
                or(kids)
            }
        }
        Expr::Not { child } => permute(child, r).not(),
        other => other.clone(),
    }
}

fn aggressive(r: &mut TestRng) -> TreeConfig {
    TreeConfig {
        warmup: r.gen_range(1..8),
        adapt_interval: r.gen_range(1..8),
        scan_cost: *[0.5, 2.0, 10.0, 100.0].choose(r).unwrap(),
        ..TreeConfig::default()
    }
}

fn random_config(r: &mut TestRng) -> ExecConfig {
    let mut cfg = ExecConfig {
        workers: r.gen_range(1..=4),
        seed: r.gen(),
        ..ExecConfig::default()
    };
    for t in Technique::ALL {
        if r.gen_bool(0.3) {
            cfg.disabled.insert(t);
        }
    }
    if r.gen_bool(0.5) {
        cfg.scan_order = ScanOrderStrategy::NoneRandom;
    }
    cfg
}

fn sql_pred(r: &mut TestRng, depth: u32) -> String {
    if depth > 0 && r.gen_bool(0.4) {
        let (x, y) = (sql_pred(r, depth - 1), sql_pred(r, depth - 1));
        return match r.gen_range(0..3) {
            0 => format!("({x} AND {y})"),
            1 => format!("({x} OR {y})"),
            _ => format!("NOT ({x})"),
        };
    }
    let n = r.gen_range(-5i64..300);
    match r.gen_range(0..10) {
        0 => format!("a > {n}"),
        1 => format!("b <= {n}"),
        2 => format!("c >= {}.5", n / 10),
        3 => format!("s LIKE '{}'", ["Alpine%", "%Fox", "Lynx", "B_own Bear"].choose(r).unwrap()),
        4 => format!("a BETWEEN {n} AND {}", n + 40),
        5 => format!("s IN ('Lynx', '{}')", common::SPECIES.choose(r).unwrap()),
        6 => format!("c IS {}NULL", if r.gen_bool(0.5) { "NOT " } else { "" }),
        7 => format!("STARTS_WITH(s, 'A{}')", if r.gen_bool(0.5) { "lp" } else { "" }),
        8 => format!("IF(a > {n}, b, -b) < {}", n % 7),
        _ => format!("a + b * 2 - id / 3 <> {n}"),
    }
}

fn sql_query(r: &mut TestRng) -> String {
    let w = format!(" WHERE {}", sql_pred(r, 2));
    let dir = *["", " ASC", " DESC"].choose(r).unwrap();
    let k = r.gen_range(0..50);
    match r.gen_range(0..5) {
        0 => format!("SELECT *  FROM t{w}"),
        1 => format!("SELECT id, a * 2 AS a2, s FROM t{w} ORDER BY c{dir} LIMIT {k} OFFSET {}", k % 3),
        2 => format!("SELECT s, COUNT(*) AS n, MAX(c) AS m FROM t{w} GROUP BY s ORDER BY n{dir} LIMIT {k}"),
        3 => format!("SELECT * FROM u JOIN t ON u.k = t.a{w} ORDER BY t.id{dir} LIMIT {k}"),
        _ => format!("SELECT * FROM t LEFT JOIN u ON t.a = u.k{w} LIMIT {k}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn partitions_keep_rows_and_stats(seed in any::<u64>()) {
        let mut r = rng(seed);
        let n = r.gen_range(1..500);
        let per = r.gen_range(1..60);
        let rows: Vec<Row> = (0..n)
            .map(|i| {
                let v = if r.gen_bool(0.1) { Value::Null } else { Value::Int(r.gen_range(-50..50)) };
                vec![Value::Int(i), v, Value::from(*common::SPECIES.choose(&mut r).unwrap())]
            })
            .collect();
        let schema = Schema::new(vec![
            Field::new("id", DataType::Int64),
            Field::new("v", DataType::Int64),
            Field::new("s", DataType::Utf8),
        ]);
        let sorted = r.gen_bool(0.5);
        let sort = sorted.then(|| vec!["v".to_string()]);
        let table = build_table("x", schema, rows.clone(), per, sort.as_deref()).unwrap();

        let ids: Vec<usize> = table.partitions().iter().map(|p| p.id).collect();
        prop_assert_eq!(ids, (1..=table.partitions().len()).collect::<Vec<_>>());
        let mut got: Vec<Row> = table.rows().collect();
        if !sorted {
            prop_assert_eq!(&got, &rows);
        }
        let mut want = rows;
        got.sort_by(row_cmp);
        want.sort_by(row_cmp);
        prop_assert_eq!(got, want);

        let last = table.partitions().len() - 1;
        for (i, p) in table.partitions().iter().enumerate() {
            prop_assert!(p.num_rows() == per || (i == last && p.num_rows() < per));
            prop_assert!(p.stats_consistent());
            for (c, s) in p.stats().iter().enumerate() {
                prop_assert_eq!(s, &compute_stats(p.column(c)).unwrap());
                prop_assert_eq!(s.row_count, p.num_rows());
                for v in p.column(c).iter().filter(|v| !v.is_null()) {
                    prop_assert!(s.min.as_ref().unwrap().total_cmp(v).is_le());
                    prop_assert!(v.total_cmp(s.max.as_ref().unwrap()).is_le());
                }
            }
        }
    }

    #[test]
    fn derived_intervals_contain_row_values(seed in any::<u64>()) {
        let mut r = rng(seed);
        let t = common::fact_table(&mut r);
        let exprs: Vec<Expr> = (0..4).map(|_| common::num_expr(&mut r, "", 3)).collect();
        for p in t.partitions() {
            for e in &exprs {
                let iv = derive_interval(e, p).unwrap();
                for row in p.rows() {
                    let v = match eval_row(e, t.schema(), &row) {
                        Ok(v) => v,
                        Err(_) => continue,
                    };
                    if v.is_null() {
                        prop_assert!(iv.may_be_null, "{e} gave NULL outside {iv:?}");
                    } else {
                        prop_assert!(iv.has_values && iv.contains(&v).unwrap(), "{e} = {v} outside {iv:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn tri_state_matches_rows(seed in any::<u64>()) {
        let mut r = rng(seed);
        let t = common::fact_table(&mut r);
        let preds: Vec<Expr> = (0..4).map(|_| common::pred(&mut r, "", 3)).collect();
        for p in t.partitions() {
            for e in &preds {
                let verdict = eval_meta(e, p).unwrap();
                let hits = p.rows().filter(|row| passes(e, t.schema(), row)).count();
                match verdict {
                    TriState::AlwaysFalse => prop_assert_eq!(hits, 0, "{}", e),
                    TriState::AlwaysTrue => prop_assert_eq!(hits, p.num_rows(), "{}", e),
                    TriState::Maybe => {}
                }
            }
        }
    }

    #[test]
    fn negation_swaps_verdicts_without_nulls(seed in any::<u64>()) {
        let mut r = rng(seed);
        let t = common::fact_table(&mut r);
        let e = plain_pred(&mut r, 3);
        let ne = negate(&e);
        for p in t.partitions().iter().filter(|p| p.stats().iter().all(|s| s.null_count == 0)) {
            let (v, nv) = (eval_meta(&e, p).unwrap(), eval_meta(&ne, p).unwrap());
            prop_assert_eq!(v == TriState::AlwaysTrue, nv == TriState::AlwaysFalse, "{} / {}", e, ne);
            prop_assert_eq!(v == TriState::AlwaysFalse, nv == TriState::AlwaysTrue, "{} / {}", e, ne);
        }
    }

    #[test]
    fn pruning_tree_is_sound_under_adaptation(seed in any::<u64>()) {
        let mut r = rng(seed);
        let t = common::fact_table(&mut r);
        let e = common::pred(&mut r, "", 3);
        let parts = || t.partitions().iter().map(|p| (p.id, p));

        let exact_cfg = TreeConfig { adaptive: false, ..TreeConfig::default() };
        let exact = prune_scan_set(&mut PruningTree::build(&e), parts(), &exact_cfg).unwrap();
        let cfg = aggressive(&mut r);
        let adaptive = prune_scan_set(&mut PruningTree::build(&e), parts(), &cfg).unwrap();

        let kept: BTreeSet<usize> = adaptive.scan_set.iter().copied().collect();
        prop_assert!(exact.scan_set.iter().all(|id| kept.contains(id)));
        for p in t.partitions() {
            let hits = p.rows().filter(|row| passes(&e, t.schema(), row)).count();
            if hits > 0 {
                prop_assert!(kept.contains(&p.id), "partition {} has {} matches", p.id, hits);
            }
            if adaptive.full_match_set.contains(&p.id) {
                prop_assert_eq!(hits, p.num_rows());
            }
        }

        let shuffled = permute(&e, &mut r);
        let again = prune_scan_set(&mut PruningTree::build(&shuffled), parts(), &exact_cfg).unwrap();
        prop_assert_eq!(exact.classification, again.classification);
    }

    #[test]
    fn limit_choice_is_minimal(seed in any::<u64>()) {
        let mut r = rng(seed);
        let n = r.gen_range(0..30);
        let sizes: Vec<usize> = (0..=n).map(|_| r.gen_range(1..100)).collect();
        let scan: Vec<usize> = (1..=n).filter(|_| r.gen_bool(0.8)).collect();
        let full: Vec<usize> = scan.iter().copied().filter(|_| r.gen_bool(0.5)).collect();
        let k = r.gen_range(0..800);
        let rows = |id: usize| sizes[id];
        let out = limit_decision(&scan, &full, rows, k);
        let full_rows: usize = full.iter().map(|&id| rows(id)).sum();

        let picked: BTreeSet<usize> = out.scan_set.iter().copied().collect();
        prop_assert!(picked.iter().all(|id| scan.contains(id)));
        if k == 0 {
            prop_assert!(out.scan_set.is_empty());
        } else if full_rows >= k {
            prop_assert!(picked.iter().all(|id| full.contains(id)));
            let sum: usize = picked.iter().map(|&id| rows(id)).sum();
            prop_assert!(sum >= k);
            for &id in &picked {
                prop_assert!(sum - rows(id) < k, "dropping {} still leaves {}", id, sum - rows(id));
            }
        } else {
            prop_assert_eq!(picked, scan.iter().copied().collect::<BTreeSet<_>>());
            prop_assert_ne!(out.reason, LimitReason::Applied);
        }
    }

    #[test]
    fn topk_heap_matches_sort(seed in any::<u64>()) {
        let mut r = rng(seed);
        let dir = direction(&mut r);
        let k = r.gen_range(0..20);
        let vals: Vec<Value> = (0..r.gen_range(0..200))
            .map(|_| if r.gen_bool(0.05) { Value::Null } else { Value::Int(r.gen_range(0..60)) })
            .collect();
        let mut heap = TopKState::new(k, dir);
        let mut last = None;
        for (i, v) in vals.iter().enumerate() {
            heap.heap_insert(v.clone(), 1, i, vec![]);
            let b = heap.boundary().cloned();
            if let (Some(old), Some(new)) = (&last, &b) {
                prop_assert_ne!(value_rank(dir, new, old), Ordering::Greater);
            }
            prop_assert!(last.is_none() || b.is_some());
            last = b;
        }
        let mut want = vals;
        want.sort_by(|a, b| value_rank(dir, a, b));
        want.truncate(k);
        let got: Vec<Value> = heap.into_sorted().into_iter().map(|e| e.value).collect();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn init_boundary_never_passes_kth_value(seed in any::<u64>()) {
        let mut r = rng(seed);
        let dir = direction(&mut r);
        let k = r.gen_range(1..60);
        let parts: Vec<Vec<Value>> = (0..r.gen_range(0..12))
            .map(|_| {
                let lo = r.gen_range(-100i64..100);
                (0..r.gen_range(1..15))
                    .map(|_| if r.gen_bool(0.03) { Value::Null } else { Value::Int(lo + r.gen_range(0..30)) })
                    .collect()
            })
            .collect();
        let stats: Vec<ColumnStats> = parts.iter().map(|p| compute_stats(p).unwrap()).collect();
        let mut all: Vec<Value> = parts.into_iter().flatten().filter(|v| !v.is_null()).collect();
        all.sort_by(|a, b| value_rank(dir, a, b));
        if let Some(b) = init_boundary(&stats, k, dir) {
            prop_assert!(all.len() >= k, "bound {} from only {} values", b, all.len());
            prop_assert_ne!(value_rank(dir, &all[k - 1], &b), Ordering::Greater);
        }
    }

    #[test]
    fn join_summaries_cover_build_keys(seed in any::<u64>()) {
        let mut r = rng(seed);
        let dom = *[20i64, 1000, 100_000].choose(&mut r).unwrap();
        let keys: Vec<Value> = (0..r.gen_range(0..300))
            .map(|_| if r.gen_bool(0.05) { Value::Null } else { Value::Int(r.gen_range(0..dom)) })
            .collect();
        let probe: Vec<(usize, ColumnStats)> = (1..=40)
            .map(|id| {
                let lo = r.gen_range(-10..dom);
                let col: Vec<Value> = (0..10).map(|_| Value::Int(lo + r.gen_range(0..dom / 10 + 1))).collect();
                (id, compute_stats(&col).unwrap())
            })
            .collect();
        let probe_refs: Vec<(usize, &ColumnStats)> = probe.iter().map(|(id, s)| (*id, s)).collect();
        let key_set: Vec<&Value> = keys.iter().filter(|v| !v.is_null()).collect();

        let exact = summarize_build(keys.clone(), 64, usize::MAX).unwrap();
        let threshold = r.gen_range(0..4);
        let mut prev: Option<BTreeSet<usize>> = None;
        for budget in [0, 1, 2, 4, 8, 32, 128] {
            let s = summarize_build(keys.clone(), budget, threshold).unwrap();
            prop_assert!(key_set.iter().all(|v| s.contains(v)), "{:?}", s);
            if let BuildSummary::RangeSet { ranges } = &s {
                prop_assert!(ranges.len() <= budget.max(1));
            }
            let kept: BTreeSet<usize> = prune_probe(&probe_refs, &s).into_iter().collect();
            for (id, st) in &probe {
                let (lo, hi) = (st.min.as_ref().unwrap(), st.max.as_ref().unwrap());
                let hit = key_set.iter().any(|v| lo.total_cmp(v).is_le() && v.total_cmp(hi).is_le());
                if hit {
                    prop_assert!(kept.contains(id));
                }
            }
            let exact_kept: BTreeSet<usize> = prune_probe(&probe_refs, &exact).into_iter().collect();
            prop_assert!(exact_kept.is_subset(&kept));
            if let Some(p) = &prev {
                prop_assert!(kept.is_subset(p), "budget {} kept more than a smaller one", budget);
            }
            prev = Some(kept);
        }
    }

    #[test]
    fn sql_plans_round_trip_through_json(seed in any::<u64>()) {
        let mut r = rng(seed);
        let cat = common::catalog(&mut r);
        let text = sql_query(&mut r);
        let plan = parse_sql(&text, &cat).unwrap();
        let json = serde_json::to_string(&plan).unwrap();
        let back: Plan = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(&back, &plan);
        prop_assert_eq!(parse_sql(&text, &cat).unwrap(), plan);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn results_ignore_techniques_and_workers(seed in any::<u64>()) {
        let mut r = rng(seed);
        let cat = common::catalog(&mut r);
        let plan = common::query(&mut r);
        for cfg in [ExecConfig::default(), random_config(&mut r), random_config(&mut r)] {
            let (rows, stats) = execute(&plan, &cat, &cfg).unwrap();
            prop_assert!(check_equivalent(&plan, &cat, &rows).is_ok(), "{}\n{:?}", plan.display_tree(), cfg);
            prop_assert!(stats.check_conservation().is_ok());
            for t in &cfg.disabled {
                prop_assert_eq!(stats.pruned(*t), 0);
            }
        }
    }

    #[test]
    fn report_ratios_recompute(seed in any::<u64>()) {
        let mut r = rng(seed);
        let cat: Catalog = common::catalog(&mut r);
        let stats: Vec<_> = (0..8)
            .map(|_| execute(&common::query(&mut r), &cat, &ExecConfig::default()).unwrap().1)
            .collect();
        for s in &stats {
            let ratios = pruning_ratio(s);
            let total = s.partitions_total();
            let pruned: usize = Technique::ALL.iter().map(|&t| s.pruned(t)).sum();
            prop_assert_eq!(pruned + s.scanned(), total);
            if total == 0 {
                prop_assert!(ratios.overall.is_none());
            } else {
                prop_assert!((ratios.overall.unwrap() - pruned as f64 / total as f64).abs() < 1e-12);
                for t in Technique::ALL {
                    prop_assert!((ratios.get(t).unwrap() - s.pruned(t) as f64 / total as f64).abs() < 1e-12);
                }
            }
            for t in Technique::ALL {
                prop_assert!(!s.applied(t) || s.eligible(t), "{:?} applied but not eligible", t);
            }
        }
        let report = flow_report(&stats);
        prop_assert_eq!(report.queries, stats.len());
        for t in &report.techniques {
            prop_assert!(t.eligible >= t.applied);
        }
        let d = &report.overall;
        let qs = [d.min, d.p10, d.p25, d.median, d.p75, d.p90, d.p99, d.max];
        prop_assert!(qs.windows(2).all(|w| w[0] <= w[1]), "{:?}", d);
    }
}

#[derive(Clone, Copy)]
enum K {
    T,
    F,
    N,
}

fn kv(k: K) -> Value {
    match k {
        K::T => Value::Bool(true),
        K::F => Value::Bool(false),
        K::N => Value::Null,
    }
}

#[test]
fn kleene_truth_tables() {
    let schema = Schema::new(vec![Field::new("x", DataType::Bool), Field::new("y", DataType::Bool)]);
    let all = [K::T, K::F, K::N];
    for x in all {
        let not = eval_row(&col("x").not(), &schema, &[kv(x), Value::Null]).unwrap();
        let want = match x {
            K::T => kv(K::F),
            K::F => kv(K::T),
            K::N => kv(K::N),
        };
        assert_eq!(not, want);
        for y in all {
            let row = [kv(x), kv(y)];
            let a = eval_row(&and(vec![col("x"), col("y")]), &schema, &row).unwrap();
            let o = eval_row(&or(vec![col("x"), col("y")]), &schema, &row).unwrap();
            let want_and = match (x, y) {
                (K::F, _) | (_, K::F) => kv(K::F),
                (K::T, K::T) => kv(K::T),
                _ => kv(K::N),
            };
            let want_or = match (x, y) {
                (K::T, _) | (_, K::T) => kv(K::T),
                (K::F, K::F) => kv(K::F),
                _ => kv(K::N),
            };
            assert_eq!(a, want_and);
            assert_eq!(o, want_or);
        }
    }
    let ts = [TriState::AlwaysFalse, TriState::Maybe, TriState::AlwaysTrue];
    for a in ts {
        assert_eq!(a.not().not(), a);
        for b in ts {
            assert_eq!(a.and(b), b.and(a));
            assert_eq!(a.or(b), b.or(a));
            assert_eq!(a.and(b).not(), a.not().or(b.not()));
        }
    }
}

#[test]
fn empty_build_prunes_every_probe_partition() {
    let s = summarize_build(vec![Value::Null, Value::Null], 8, 8).unwrap();
    assert_eq!(s, BuildSummary::Empty);
    let st = ColumnStats::range(0, 10, 4);
    assert!(prune_probe(&[(1, &st)], &s).is_empty());
}
