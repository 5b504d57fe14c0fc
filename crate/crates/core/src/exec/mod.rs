//! Query execution with partition pruning.

mod naive;
mod operators;
mod physical;
mod stats;

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::rc::Rc;
use std::sync::Arc;
use web_time::Instant;

use serde::{Deserialize, Serialize};

pub use naive::{check_equivalent, naive_execute, strip_limits};
pub use physical::{GroupTopK, PhysicalPlan, ScanJoin, ScanPlan, ScanTopK, TopKReport};
pub use stats::*;

use crate::error::Result;
use crate::expr::BoundExpr;
use crate::join_pruning::SummaryConfig;
use crate::limit::LimitReason;
use crate::partition::{Field, Row, Schema};
use crate::plan::{Catalog, Plan};
use crate::pruning_tree::TreeConfig;
use crate::topk::{Bound, BoundaryCell, ScanOrderStrategy, TopKState};
use operators::*;
use physical::Planner;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExecConfig {
    /// Partitions loaded concurrently per scan.
    pub workers: usize,
    pub disabled: BTreeSet<Technique>,
    pub tree: TreeConfig,
    pub summary: SummaryConfig,
    pub scan_order: ScanOrderStrategy,
    /// Seed for the random scan order.
    pub seed: u64,
    /// Record one event per partition decision.
    pub trace: bool,
}

impl Default for ExecConfig {
    fn default() -> Self {
        ExecConfig {
            workers: 1,
            disabled: BTreeSet::new(),
            tree: TreeConfig::default(),
            summary: SummaryConfig::default(),
            scan_order: ScanOrderStrategy::default(),
            seed: 0,
            trace: false,
        }
    }
}

impl ExecConfig {
    pub fn enabled(&self, t: Technique) -> bool {
        !self.disabled.contains(&t)
    }

    /// Everything off: every partition is read.
    pub fn all_disabled() -> Self {
        ExecConfig {
            disabled: Technique::ALL.into_iter().collect(),
            ..ExecConfig::default()
        }
    }

    pub fn without(mut self, t: Technique) -> Self {
        self.disabled.insert(t);
        self
    }
}

/// Plans `plan` and runs the compile-time pruning steps.
pub fn plan_physical(plan: &Plan, catalog: &Catalog, config: &ExecConfig) -> Result<PhysicalPlan> {
    Planner::new(catalog, config, plan).plan(plan)
}

pub fn explain(plan: &Plan, catalog: &Catalog, config: &ExecConfig) -> Result<String> {
    Ok(plan_physical(plan, catalog, config)?.explain())
}

#[derive(Default)]
struct Wiring {
    cells: HashMap<usize, Arc<BoundaryCell>>,
    floors: HashMap<usize, crate::value::Value>,
    slots: BTreeMap<usize, Shared<JoinSlot>>,
    runtimes: BTreeMap<usize, Shared<ScanRuntime>>,
    trace: Option<Shared<Vec<TraceEvent>>>,
}

impl Wiring {
    fn collect_hooks(&mut self, plan: &PhysicalPlan) {
        if let PhysicalPlan::Scan(ScanPlan {
            topk: Some(t), ..
        }) = plan
        {
            let initial = t.initial_boundary.clone().map(|value| Bound {
                value,
                strict: true,
            });
            if let Some(v) = &t.initial_boundary {
                self.floors.insert(t.hook, v.clone());
            }
            self.cells
                .insert(t.hook, Arc::new(BoundaryCell::new(t.direction, initial)));
        }
        for i in plan.inputs() {
            self.collect_hooks(i);
        }
    }

    fn slot(&mut self, id: usize) -> Shared<JoinSlot> {
        self.slots.entry(id).or_default().clone()
    }
}

fn build_op(
    plan: &PhysicalPlan,
    catalog: &Catalog,
    config: &ExecConfig,
    w: &mut Wiring,
) -> Result<(Box<dyn Operator>, Schema)> {
    Ok(match plan {
        PhysicalPlan::Scan(s) => {
            let table = catalog.table(&s.table)?.clone();
            let schema = table.schema().qualified(&s.alias);
            let predicate = s
                .predicate
                .as_ref()
                .map(|p| BoundExpr::bind(p, &schema))
                .transpose()?;
            let runtime: Shared<ScanRuntime> = Rc::default();
            w.runtimes.insert(s.index, runtime.clone());
            let topk = s
                .topk
                .as_ref()
                .and_then(|t| Some((w.cells.get(&t.hook)?.clone(), t.order.clone())));
            let join = s.join.as_ref().map(|j| (w.slot(j.join), j.key.clone()));
            let op = ScanOp {
                index: s.index,
                table,
                predicate,
                queue: s.scan_set.iter().copied().collect(),
                buffer: VecDeque::new(),
                topk,
                join,
                join_done: false,
                row_cap: s.row_cap,
                emitted: 0,
                loaded: 0,
                workers: config.workers.max(1),
                runtime,
                trace: w.trace.clone(),
            };
            (Box::new(op), schema)
        }
        PhysicalPlan::Filter { input, predicate } => {
            let (input, schema) = build_op(input, catalog, config, w)?;
            let predicate = BoundExpr::bind(predicate, &schema)?;
            (Box::new(FilterOp { input, predicate }), schema)
        }
        PhysicalPlan::Project { input, exprs } => {
            let (input, schema) = build_op(input, catalog, config, w)?;
            let mut fields = Vec::with_capacity(exprs.len());
            let mut bound = Vec::with_capacity(exprs.len());
            for e in exprs {
                fields.push(Field::new(e.name.clone(), e.expr.data_type(&schema)?));
                bound.push(BoundExpr::bind(&e.expr, &schema)?);
            }
            (Box::new(ProjectOp { input, exprs: bound }), Schema::new(fields))
        }
        PhysicalPlan::HashJoin {
            kind,
            build,
            probe,
            build_key,
            probe_key,
            join,
        } => {
            let slot = join.map(|j| w.slot(j));
            let (build, bs) = build_op(build, catalog, config, w)?;
            let (probe, ps) = build_op(probe, catalog, config, w)?;
            let op = HashJoinOp {
                kind: *kind,
                build,
                probe,
                build_key: BoundExpr::bind(build_key, &bs)?,
                probe_key: BoundExpr::bind(probe_key, &ps)?,
                probe_width: ps.len(),
                slot,
                summary_config: config.summary,
                state: JoinState::default(),
            };
            (Box::new(op), bs.join(&ps))
        }
        PhysicalPlan::GroupBy {
            input,
            keys,
            aggregates,
            topk,
        } => {
            let (input, schema) = build_op(input, catalog, config, w)?;
            let mut fields = Vec::new();
            let mut bound_keys = Vec::new();
            for k in keys {
                fields.push(Field::new(k.name.clone(), k.expr.data_type(&schema)?));
                bound_keys.push(BoundExpr::bind(&k.expr, &schema)?);
            }
            let mut aggs = Vec::new();
            for a in aggregates {
                let arg = a.arg.as_ref().map(|e| BoundExpr::bind(e, &schema)).transpose()?;
                let ty = match &a.arg {
                    Some(e) if a.func != crate::plan::AggFunc::Count => e.data_type(&schema)?,
                    _ => crate::value::DataType::Int64,
                };
                fields.push(Field::new(a.name.clone(), ty));
                aggs.push((a.func, arg));
            }
            let topk = topk.as_ref().map(|t| GroupHeap {
                key: t.key,
                direction: t.direction,
                k: t.k,
                cell: t.hook.and_then(|h| w.cells.get(&h).cloned()),
            });
            let op = GroupByOp {
                input,
                keys: bound_keys,
                aggs,
                topk,
                done: false,
            };
            (Box::new(op), Schema::new(fields))
        }
        PhysicalPlan::TopK {
            input,
            order,
            direction,
            k,
            hook,
            ..
        } => {
            let (input, schema) = build_op(input, catalog, config, w)?;
            let floor = hook.and_then(|h| w.floors.get(&h).cloned());
            let op = TopKOp {
                input,
                order: BoundExpr::bind(order, &schema)?,
                state: Some(TopKState::new(*k, *direction).with_floor(floor)),
                cell: hook.and_then(|h| w.cells.get(&h).cloned()),
            };
            (Box::new(op), schema)
        }
        PhysicalPlan::Limit {
            input,
            limit,
            offset,
            halting,
        } => {
            let (input, schema) = build_op(input, catalog, config, w)?;
            let op = LimitOp {
                input,
                limit: *limit,
                offset: *offset,
                halting: *halting,
                seen: 0,
                produced: 0,
                done: false,
            };
            (Box::new(op), schema)
        }
    })
}

/// Runs `plan` and reports what each pruning technique did.
pub fn execute(plan: &Plan, catalog: &Catalog, config: &ExecConfig) -> Result<(Vec<Row>, QueryStats)> {
    let start = Instant::now();
    let mut planner = Planner::new(catalog, config, plan);
    let physical = planner.plan(plan)?;
    let mut wiring = Wiring {
        trace: config.trace.then(Rc::default),
        ..Wiring::default()
    };
    wiring.collect_hooks(&physical);
    let (mut root, _) = build_op(&physical, catalog, config, &mut wiring)?;
    let mut rows = Vec::new();
    while let Some(batch) = root.next_batch()? {
        rows.extend(batch);
    }
    drop(root);

    let mut trace = wiring
        .trace
        .take()
        .map(|t| t.borrow().clone())
        .unwrap_or_default();
    let mut scans = Vec::new();
    for s in physical.scans() {
        let rt = wiring.runtimes.get(&s.index).map(|r| r.borrow());
        let mut partitions = s.planned_fates.clone();
        if let Some(rt) = &rt {
            partitions.extend(rt.fates.iter().cloned());
        }
        let decided: BTreeSet<usize> = partitions.iter().map(|p| p.partition_id).collect();
        for &id in &s.scan_set {
            if !decided.contains(&id) {
                partitions.push(PartitionFate {
                    partition_id: id,
                    fate: Fate::LimitHalted,
                });
                if config.trace {
                    trace.push(TraceEvent {
                        scan_index: s.index,
                        partition_id: id,
                        fate: Fate::LimitHalted,
                        boundary: None,
                    });
                }
            }
        }
        let mut st = ScanStats {
            scan_index: s.index,
            table: s.table.clone(),
            alias: s.alias.clone(),
            has_predicate: s.predicate.is_some(),
            partitions_total: s.partitions_total,
            full_match: s.full_match.len(),
            minimal_needed: s.row_cap.map(|_| {
                rt.as_ref()
                    .and_then(|r| r.minimal_needed)
                    .unwrap_or_else(|| partitions.iter().filter(|p| p.fate == Fate::Scanned).count())
            }),
            partitions,
            filter_telemetry: s.filter_telemetry.clone(),
            ..ScanStats::default()
        };
        st.recount();
        scans.push(st);
    }

    let limit_pruning = physical
        .scans()
        .iter()
        .find_map(|s| s.limit.clone())
        .or_else(|| {
            (planner.has_limit && config.enabled(Technique::Limit)).then(|| {
                let n: usize = physical.scans().iter().map(|s| s.scan_set.len()).sum();
                LimitPruningStats {
                    applied: false,
                    reason: LimitReason::UnsupportedShape,
                    effective_k: outer_limit(plan).unwrap_or(0),
                    partitions_before: n,
                    partitions_after: n,
                }
            })
        });

    let join_pruning = wiring
        .slots
        .values()
        .filter_map(|s| s.borrow().stats.clone())
        .collect();

    let topk_pruning = physical
        .topk_reports()
        .into_iter()
        .map(|r| {
            let hooked: Vec<(&ScanPlan, &ScanStats)> = physical
                .scans()
                .into_iter()
                .zip(&scans)
                .filter(|(p, _)| r.hook.is_some() && p.topk.as_ref().map(|t| t.hook) == r.hook)
                .collect();
            let initial = hooked
                .iter()
                .find_map(|(p, _)| p.topk.as_ref()?.initial_boundary.clone());
            TopKPruningStats {
                eligible: r.eligible,
                plan_shape: r.shape,
                initialized_boundary: initial.is_some(),
                initial_boundary_value: initial,
                partitions_pruned: hooked.iter().map(|(_, s)| s.pruned_by_topk).sum(),
                partitions_scanned: hooked.iter().map(|(_, s)| s.scanned).sum(),
                strategy: config.scan_order,
            }
        })
        .collect();

    let stats = QueryStats {
        version: STATS_VERSION,
        label: None,
        scans,
        limit_pruning,
        join_pruning,
        topk_pruning,
        rows_out: rows.len(),
        wall_time_ms: start.elapsed().as_secs_f64() * 1000.0,
        trace,
    };
    Ok((rows, stats))
}

fn outer_limit(plan: &Plan) -> Option<usize> {
    match plan {
        Plan::Limit { limit, offset, .. } => Some(limit + offset),
        _ => plan.inputs().into_iter().find_map(outer_limit),
    }
}

#[cfg(test)]
mod tests;
