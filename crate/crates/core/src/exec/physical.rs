//! Planner phase: fuses filters into scans, runs compile-time pruning
//! (filter, LIMIT), orders top-k scans and wires up runtime hooks.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::stats::{Fate, LimitPruningStats, PartitionFate, TopKShape};
use super::ExecConfig;
use super::Technique;
use crate::error::Result;
use crate::expr::{derive_interval, Expr, TriState};
use crate::limit::{limit_decision, limit_pushdown, LimitReason};
use crate::partition::{MicroPartition, Schema, StatsSource};
use crate::plan::{Aggregate, Catalog, Direction, JoinKind, NamedExpr, Plan};
use crate::pruning_tree::{prune_scan_set, NodeReport, PruningTree};
use crate::topk::{init_boundary, order_by_intervals};
use crate::value::Value;

#[derive(Debug, Clone, Serialize)]
pub struct ScanTopK {
    pub hook: usize,
    /// Order expression over the scan's columns.
    pub order: Expr,
    pub direction: Direction,
    /// Strict bounds keep partitions that tie with the boundary.
    pub strict: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_boundary: Option<Value>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanJoin {
    pub join: usize,
    pub key: Expr,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanPlan {
    pub index: usize,
    pub table: String,
    pub alias: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predicate: Option<Expr>,
    pub partitions_total: usize,
    pub full_match: Vec<usize>,
    /// Partitions removed during planning.
    pub planned_fates: Vec<PartitionFate>,
    /// Partitions to read, in visit order.
    pub scan_set: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub limit: Option<LimitPruningStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub row_cap: Option<usize>,
    pub filter_telemetry: Vec<NodeReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub topk: Option<ScanTopK>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub join: Option<ScanJoin>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GroupTopK {
    /// Index of the ordering key among the group keys.
    pub key: usize,
    pub direction: Direction,
    pub k: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hook: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TopKReport {
    pub eligible: bool,
    pub shape: Option<TopKShape>,
    pub hook: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum PhysicalPlan {
    Scan(ScanPlan),
    Filter {
        input: Box<PhysicalPlan>,
        predicate: Expr,
    },
    Project {
        input: Box<PhysicalPlan>,
        exprs: Vec<NamedExpr>,
    },
    HashJoin {
        kind: JoinKind,
        build: Box<PhysicalPlan>,
        probe: Box<PhysicalPlan>,
        build_key: Expr,
        probe_key: Expr,
        #[serde(skip_serializing_if = "Option::is_none")]
        join: Option<usize>,
    },
    GroupBy {
        input: Box<PhysicalPlan>,
        keys: Vec<NamedExpr>,
        aggregates: Vec<Aggregate>,
        #[serde(skip_serializing_if = "Option::is_none")]
        topk: Option<GroupTopK>,
    },
    TopK {
        input: Box<PhysicalPlan>,
        order: Expr,
        direction: Direction,
        k: usize,
        #[serde(skip_serializing_if = "Option::is_none")]
        hook: Option<usize>,
        #[serde(skip_serializing_if = "Option::is_none")]
        report: Option<TopKReport>,
    },
    Limit {
        input: Box<PhysicalPlan>,
        limit: usize,
        offset: usize,
        halting: bool,
    },
}

/// Top-k hook waiting to be attached to a scan.
#[derive(Debug, Clone)]
struct PendingTopK {
    hook: usize,
    order: Expr,
    direction: Direction,
    k: usize,
    strict: bool,
    init: bool,
}

#[derive(Debug, Clone, Default)]
struct Hooks {
    topk: Option<PendingTopK>,
    probe_topk: Option<PendingTopK>,
    join: Option<ScanJoin>,
}

pub(crate) struct Planner<'a> {
    catalog: &'a Catalog,
    config: &'a ExecConfig,
    limit_annotations: BTreeMap<usize, usize>,
    next_scan: usize,
    next_hook: usize,
    next_join: usize,
    pub(crate) has_limit: bool,
}

fn peel_filters(plan: &Plan) -> (&Plan, Vec<&Expr>) {
    let mut preds = Vec::new();
    let mut cur = plan;
    while let Plan::Filter { input, predicate } = cur {
        preds.push(predicate);
        cur = input;
    }
    preds.reverse();
    (cur, preds)
}

fn contains_limit(plan: &Plan) -> bool {
    matches!(plan, Plan::Limit { .. }) || plan.inputs().into_iter().any(contains_limit)
}

#[derive(PartialEq)]
enum Side {
    Build,
    Probe,
}

/// Which join input every column of `expr` comes from.
fn expr_side(expr: &Expr, build: &Schema, joined: &Schema) -> Option<Side> {
    let cols = expr.columns();
    if cols.is_empty() {
        return None;
    }
    let mut side = None;
    for c in cols {
        let s = if joined.resolve(c).ok()? < build.len() {
            Side::Build
        } else {
            Side::Probe
        };
        match &side {
            None => side = Some(s),
            Some(prev) if *prev != s => return None,
            _ => {}
        }
    }
    side
}

impl<'a> Planner<'a> {
    pub(crate) fn new(catalog: &'a Catalog, config: &'a ExecConfig, plan: &Plan) -> Self {
        let limit_annotations = if config.enabled(Technique::Limit) {
            limit_pushdown(plan)
        } else {
            BTreeMap::new()
        };
        Planner {
            catalog,
            config,
            limit_annotations,
            next_scan: 0,
            next_hook: 0,
            next_join: 0,
            has_limit: contains_limit(plan),
        }
    }

    pub(crate) fn plan(&mut self, plan: &Plan) -> Result<PhysicalPlan> {
        plan.schema(self.catalog)?;
        self.build(plan, Hooks::default())
    }

    fn build(&mut self, plan: &Plan, hooks: Hooks) -> Result<PhysicalPlan> {
        match plan {
            Plan::Scan { .. } | Plan::Filter { .. } => {
                let (inner, preds) = peel_filters(plan);
                if let Plan::Scan { table, alias } = inner {
                    let alias = alias.as_deref().unwrap_or(table);
                    return self.build_scan(table, alias, &preds, hooks.topk, hooks.join);
                }
                let Plan::Filter { input, predicate } = plan else {
                    unreachable!()
                };
                Ok(PhysicalPlan::Filter {
                    input: Box::new(self.build(input, hooks)?),
                    predicate: predicate.clone(),
                })
            }
            Plan::Project { input, exprs } => Ok(PhysicalPlan::Project {
                input: Box::new(self.build(input, Hooks::default())?),
                exprs: exprs.clone(),
            }),
            Plan::HashJoin {
                kind,
                build,
                probe,
                build_key,
                probe_key,
            } => {
                let b = self.build(build, Hooks::default())?;
                self.plan_join(*kind, b, probe, build_key, probe_key, hooks.probe_topk)
            }
            Plan::GroupBy {
                input,
                keys,
                aggregates,
            } => Ok(PhysicalPlan::GroupBy {
                input: Box::new(self.build(input, Hooks::default())?),
                keys: keys.clone(),
                aggregates: aggregates.clone(),
                topk: None,
            }),
            Plan::TopK {
                input,
                order,
                direction,
                k,
            } => self.plan_topk(input, order, *direction, *k, None),
            Plan::Limit {
                input,
                limit,
                offset,
            } => Ok(PhysicalPlan::Limit {
                input: Box::new(self.build(input, Hooks::default())?),
                limit: *limit,
                offset: *offset,
                halting: self.config.enabled(Technique::Limit),
            }),
        }
    }

    fn plan_join(
        &mut self,
        kind: JoinKind,
        build: PhysicalPlan,
        probe: &Plan,
        build_key: &Expr,
        probe_key: &Expr,
        probe_topk: Option<PendingTopK>,
    ) -> Result<PhysicalPlan> {
        let probe_is_scan = matches!(peel_filters(probe).0, Plan::Scan { .. });
        let join = (self.config.enabled(Technique::Join) && probe_is_scan).then(|| {
            self.next_join += 1;
            self.next_join - 1
        });
        let hooks = Hooks {
            topk: probe_topk,
            probe_topk: None,
            join: join.map(|j| ScanJoin {
                join: j,
                key: probe_key.clone(),
            }),
        };
        Ok(PhysicalPlan::HashJoin {
            kind,
            build: Box::new(build),
            probe: Box::new(self.build(probe, hooks)?),
            build_key: build_key.clone(),
            probe_key: probe_key.clone(),
            join,
        })
    }

    fn new_hook(&mut self) -> usize {
        self.next_hook += 1;
        self.next_hook - 1
    }

    fn plan_topk(
        &mut self,
        input: &Plan,
        order: &Expr,
        direction: Direction,
        k: usize,
        shape_override: Option<TopKShape>,
    ) -> Result<PhysicalPlan> {
        let not_eligible = |this: &mut Self| -> Result<PhysicalPlan> {
            Ok(PhysicalPlan::TopK {
                input: Box::new(this.build(input, Hooks::default())?),
                order: order.clone(),
                direction,
                k,
                hook: None,
                report: Some(TopKReport {
                    eligible: shape_override.is_some(),
                    shape: shape_override,
                    hook: None,
                }),
            })
        };
        if !self.config.enabled(Technique::Topk) {
            return not_eligible(self);
        }
        let (inner, _) = peel_filters(input);
        let pending = |this: &mut Self, strict: bool, init: bool, order: Expr| PendingTopK {
            hook: this.new_hook(),
            order,
            direction,
            k,
            strict,
            init,
        };

        // (a) directly over a (filtered) scan
        if let Plan::Scan { .. } = inner {
            let init = matches!(order, Expr::Column { .. });
            let p = pending(self, false, init, order.clone());
            let hook = p.hook;
            let child = self.build(
                input,
                Hooks {
                    topk: Some(p),
                    ..Hooks::default()
                },
            )?;
            return Ok(PhysicalPlan::TopK {
                input: Box::new(child),
                order: order.clone(),
                direction,
                k,
                hook: Some(hook),
                report: Some(TopKReport {
                    eligible: true,
                    shape: Some(shape_override.unwrap_or(TopKShape::Scan)),
                    hook: Some(hook),
                }),
            });
        }

        if let Plan::HashJoin {
            kind,
            build,
            probe,
            build_key,
            probe_key,
        } = inner
        {
            let bs = build.schema(self.catalog)?;
            let joined = bs.join(&probe.schema(self.catalog)?);
            let side = expr_side(order, &bs, &joined);
            let probe_is_scan = matches!(peel_filters(probe).0, Plan::Scan { .. });

            // (b) order column from the probe side of an inner join
            if *kind == JoinKind::Inner && side == Some(Side::Probe) && probe_is_scan {
                let p = pending(self, false, false, order.clone());
                let hook = p.hook;
                let child = self.build(
                    input,
                    Hooks {
                        probe_topk: Some(p),
                        ..Hooks::default()
                    },
                )?;
                return Ok(PhysicalPlan::TopK {
                    input: Box::new(child),
                    order: order.clone(),
                    direction,
                    k,
                    hook: Some(hook),
                    report: Some(TopKReport {
                        eligible: true,
                        shape: Some(TopKShape::JoinProbe),
                        hook: Some(hook),
                    }),
                });
            }

            // (c) order column from the preserved side of a left outer join
            // sitting directly below: the top-k is replicated onto that side
            if *kind == JoinKind::LeftOuter
                && side == Some(Side::Build)
                && std::ptr::eq(inner, input)
            {
                let b = self.plan_topk(build, order, direction, k, Some(TopKShape::OuterJoinBuild))?;
                let join = self.plan_join(*kind, b, probe, build_key, probe_key, None)?;
                return Ok(PhysicalPlan::TopK {
                    input: Box::new(join),
                    order: order.clone(),
                    direction,
                    k,
                    hook: None,
                    report: None,
                });
            }
        }

        // (d) ordering on a group key of the aggregation directly below
        if let Plan::GroupBy {
            input: g_input,
            keys,
            aggregates,
        } = input
        {
            let out = input.schema(self.catalog)?;
            let key = match order {
                Expr::Column { name } => out.resolve(name).ok().filter(|&i| i < keys.len()),
                _ => None,
            };
            if let Some(key) = key {
                let scan_below = matches!(peel_filters(g_input).0, Plan::Scan { .. });
                let p = scan_below.then(|| pending(self, true, false, keys[key].expr.clone()));
                let hook = p.as_ref().map(|p| p.hook);
                let child = self.build(
                    g_input,
                    Hooks {
                        topk: p,
                        ..Hooks::default()
                    },
                )?;
                let group = PhysicalPlan::GroupBy {
                    input: Box::new(child),
                    keys: keys.clone(),
                    aggregates: aggregates.clone(),
                    topk: Some(GroupTopK {
                        key,
                        direction,
                        k,
                        hook,
                    }),
                };
                return Ok(PhysicalPlan::TopK {
                    input: Box::new(group),
                    order: order.clone(),
                    direction,
                    k,
                    hook: None,
                    report: Some(TopKReport {
                        eligible: true,
                        shape: Some(TopKShape::Aggregation),
                        hook,
                    }),
                });
            }
        }
        not_eligible(self)
    }

    fn build_scan(
        &mut self,
        table_name: &str,
        alias: &str,
        preds: &[&Expr],
        topk: Option<PendingTopK>,
        join: Option<ScanJoin>,
    ) -> Result<PhysicalPlan> {
        let index = self.next_scan;
        self.next_scan += 1;
        let cfg = self.config;
        let table = self.catalog.table(table_name)?.clone();
        let predicate = Expr::conjunction(preds.iter().map(|&p| p.clone()).collect());
        let parts = table.partitions();

        let mut telemetry = Vec::new();
        let use_tree = cfg.enabled(Technique::Filter)
            || cfg.enabled(Technique::Limit)
            || cfg.enabled(Technique::Topk);
        let classification: Vec<(usize, TriState)> = match &predicate {
            Some(p) if use_tree => {
                // Cutoff extrapolates from the partitions seen so far, so
                // visit them in a shuffled order: on a clustered table the
                // id order is the least representative sample there is.
                let mut visit: Vec<&MicroPartition> = parts.iter().collect();
                visit.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed ^ index as u64));
                let mut tree = PruningTree::build(p);
                let r = prune_scan_set(&mut tree, visit.into_iter().map(|p| (p.id, p)), &cfg.tree)?;
                telemetry = r.telemetry;
                let mut c = r.classification;
                c.sort_by_key(|&(id, _)| id);
                c
            }
            Some(_) => parts.iter().map(|p| (p.id, TriState::Maybe)).collect(),
            None => parts.iter().map(|p| (p.id, TriState::AlwaysTrue)).collect(),
        };

        let mut planned_fates = Vec::new();
        let mut scan_set = Vec::new();
        let mut full_match = Vec::new();
        for (id, v) in classification {
            if v == TriState::AlwaysFalse && cfg.enabled(Technique::Filter) {
                planned_fates.push(PartitionFate {
                    partition_id: id,
                    fate: Fate::PrunedByFilter,
                });
                continue;
            }
            if v == TriState::AlwaysTrue {
                full_match.push(id);
            }
            scan_set.push(id);
        }

        let rows = |id: usize| table.partition(id).map_or(0, |p| p.num_rows());
        let mut limit = None;
        let mut row_cap = None;
        if let Some(&k) = self.limit_annotations.get(&index) {
            let before = scan_set.len();
            let decision = limit_decision(&scan_set, &full_match, rows, k);
            for id in &scan_set {
                if !decision.scan_set.contains(id) {
                    planned_fates.push(PartitionFate {
                        partition_id: *id,
                        fate: Fate::PrunedByLimit,
                    });
                }
            }
            scan_set = decision.scan_set;
            limit = Some(LimitPruningStats {
                applied: decision.reason == LimitReason::Applied,
                reason: decision.reason,
                effective_k: k,
                partitions_before: before,
                partitions_after: scan_set.len(),
            });
            row_cap = Some(k);
        }
        full_match.retain(|id| scan_set.contains(id));

        let topk = match topk {
            Some(p) => {
                let mut intervals = Vec::with_capacity(scan_set.len());
                for &id in &scan_set {
                    let part = table.partition(id).expect("scan set ids exist");
                    intervals.push((id, derive_interval(&p.order, part)?));
                }
                scan_set = order_by_intervals(&intervals, p.direction, cfg.scan_order, cfg.seed);
                let initial_boundary = match &p.order {
                    Expr::Column { name } if p.init => {
                        let stats: Vec<_> = full_match
                            .iter()
                            .filter_map(|&id| table.partition(id)?.column_stats(name).cloned())
                            .collect();
                        init_boundary(&stats, p.k, p.direction)
                    }
                    _ => None,
                };
                Some(ScanTopK {
                    hook: p.hook,
                    order: p.order,
                    direction: p.direction,
                    strict: p.strict,
                    initial_boundary,
                })
            }
            None => None,
        };

        Ok(PhysicalPlan::Scan(ScanPlan {
            index,
            table: table_name.to_string(),
            alias: alias.to_string(),
            predicate,
            partitions_total: parts.len(),
            full_match,
            planned_fates,
            scan_set,
            limit,
            row_cap,
            filter_telemetry: telemetry,
            topk,
            join,
        }))
    }
}

fn id_set(ids: &[usize]) -> String {
    let s: Vec<String> = ids.iter().map(|i| i.to_string()).collect();
    format!("{{{}}}", s.join(", "))
}

impl PhysicalPlan {
    pub fn inputs(&self) -> Vec<&PhysicalPlan> {
        match self {
            PhysicalPlan::Scan(_) => vec![],
            PhysicalPlan::Filter { input, .. }
            | PhysicalPlan::Project { input, .. }
            | PhysicalPlan::GroupBy { input, .. }
            | PhysicalPlan::TopK { input, .. }
            | PhysicalPlan::Limit { input, .. } => vec![input],
            PhysicalPlan::HashJoin { build, probe, .. } => vec![build, probe],
        }
    }

    /// Scan nodes in scan-index order.
    pub fn scans(&self) -> Vec<&ScanPlan> {
        let mut out = Vec::new();
        self.collect_scans(&mut out);
        out.sort_by_key(|s| s.index);
        out
    }

    fn collect_scans<'a>(&'a self, out: &mut Vec<&'a ScanPlan>) {
        if let PhysicalPlan::Scan(s) = self {
            out.push(s);
        }
        for i in self.inputs() {
            i.collect_scans(out);
        }
    }

    /// Top-k reports in pre-order.
    pub fn topk_reports(&self) -> Vec<&TopKReport> {
        let mut out = Vec::new();
        self.collect_reports(&mut out);
        out
    }

    fn collect_reports<'a>(&'a self, out: &mut Vec<&'a TopKReport>) {
        if let PhysicalPlan::TopK {
            report: Some(r), ..
        } = self
        {
            out.push(r);
        }
        for i in self.inputs() {
            i.collect_reports(out);
        }
    }

    /// Human-readable plan with pruning annotations and predicted scan sets.
    pub fn explain(&self) -> String {
        let mut out = String::new();
        self.explain_into(0, &mut out);
        out
    }

    fn explain_into(&self, depth: usize, out: &mut String) {
        let pad = "  ".repeat(depth);
        match self {
            PhysicalPlan::Scan(s) => {
                let name = if s.alias == s.table {
                    s.table.clone()
                } else {
                    format!("{} AS {}", s.table, s.alias)
                };
                let _ = write!(out, "{pad}Scan {name}");
                if let Some(p) = &s.predicate {
                    let _ = write!(out, " WHERE {p}");
                }
                out.push('\n');
                let filtered: Vec<usize> = s
                    .planned_fates
                    .iter()
                    .filter(|f| f.fate == Fate::PrunedByFilter)
                    .map(|f| f.partition_id)
                    .collect();
                let _ = writeln!(
                    out,
                    "{pad}  partitions: {}, pruned by filter: {}, fully matching: {}",
                    s.partitions_total,
                    id_set(&filtered),
                    id_set(&s.full_match)
                );
                if let Some(l) = &s.limit {
                    let _ = writeln!(
                        out,
                        "{pad}  limit k={}: {} ({} -> {} partitions)",
                        l.effective_k,
                        serde_json::to_value(l.reason)
                            .ok()
                            .and_then(|v| v.as_str().map(str::to_string))
                            .unwrap_or_default(),
                        l.partitions_before,
                        l.partitions_after
                    );
                }
                if let Some(t) = &s.topk {
                    let _ = write!(
                        out,
                        "{pad}  top-k hook: order {} {:?}",
                        t.order, t.direction
                    );
                    if let Some(b) = &t.initial_boundary {
                        let _ = write!(out, ", initial boundary {b}");
                    }
                    out.push('\n');
                }
                if let Some(j) = &s.join {
                    let _ = writeln!(out, "{pad}  join pruning on probe key {}", j.key);
                }
                let _ = writeln!(out, "{pad}  scan set {}", id_set(&s.scan_set));
            }
            PhysicalPlan::Filter { predicate, .. } => {
                let _ = writeln!(out, "{pad}Filter {predicate}");
            }
            PhysicalPlan::Project { exprs, .. } => {
                let list: Vec<String> = exprs.iter().map(|e| format!("{} AS {}", e.expr, e.name)).collect();
                let _ = writeln!(out, "{pad}Project {}", list.join(", "));
            }
            PhysicalPlan::HashJoin {
                kind,
                build_key,
                probe_key,
                ..
            } => {
                let _ = writeln!(out, "{pad}HashJoin {kind:?} ON {build_key} = {probe_key} (build first)");
            }
            PhysicalPlan::GroupBy {
                keys,
                aggregates,
                topk,
                ..
            } => {
                let k: Vec<&str> = keys.iter().map(|k| k.name.as_str()).collect();
                let a: Vec<&str> = aggregates.iter().map(|a| a.name.as_str()).collect();
                let _ = write!(out, "{pad}GroupBy [{}] [{}]", k.join(", "), a.join(", "));
                if let Some(t) = topk {
                    let _ = write!(out, " top {} groups by {}", t.k, keys[t.key].name);
                }
                out.push('\n');
            }
            PhysicalPlan::TopK {
                order,
                direction,
                k,
                report,
                ..
            } => {
                let _ = write!(out, "{pad}TopK {order} {direction:?} k={k}");
                if let Some(TopKReport {
                    shape: Some(shape), ..
                }) = report
                {
                    let _ = write!(out, " [pruning: {shape:?}]");
                }
                out.push('\n');
            }
            PhysicalPlan::Limit { limit, offset, .. } => {
                let _ = writeln!(out, "{pad}Limit {limit} OFFSET {offset}");
            }
        }
        for i in self.inputs() {
            i.explain_into(depth + 1, out);
        }
    }
}
