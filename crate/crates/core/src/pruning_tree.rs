//! Boolean tree of pruners evaluated per partition.
//!
//! Leaves hold one filter predicate each; inner nodes are AND/OR. While a
//! scan set is being pruned the tree records, per node, how often it let a
//! partition through and what it cost. At quiescent points it uses that
//! telemetry to reorder the children of each inner node and to disable
//! pruners that do not pay for themselves. Disabling is only legal directly
//! below an AND: a disabled child of an OR would make the whole OR answer
//! "maybe" for every partition.

use std::collections::BTreeMap;
use web_time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::expr::{eval_meta, lit, widen_rewrite, Expr, TriState};
use crate::partition::StatsSource;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CostMode {
    /// Each leaf evaluation costs `1 + node count` units.
    #[default]
    Abstract,
    /// Nanoseconds of wall-clock time.
    WallClock,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeConfig {
    /// Evaluations a node needs before it is reordered or cut off.
    pub warmup: u64,
    /// Partitions between adaptation rounds.
    pub adapt_interval: usize,
    /// Cost of scanning one partition, in the same units as pruner cost.
    pub scan_cost: f64,
    pub cost_mode: CostMode,
    /// Reordering and cutoff on/off.
    pub adaptive: bool,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            warmup: 32,
            adapt_interval: 64,
            scan_cost: 100.0,
            cost_mode: CostMode::Abstract,
            adaptive: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NodeTelemetry {
    pub eval_count: u64,
    /// Evaluations that did not rule the partition out.
    pub pass_count: u64,
    pub total_eval_cost: f64,
}

impl NodeTelemetry {
    pub fn pass_rate(&self) -> f64 {
        if self.eval_count == 0 {
            1.0
        } else {
            self.pass_count as f64 / self.eval_count as f64
        }
    }

    pub fn prune_rate(&self) -> f64 {
        1.0 - self.pass_rate()
    }

    pub fn avg_cost(&self) -> f64 {
        if self.eval_count == 0 {
            0.0
        } else {
            self.total_eval_cost / self.eval_count as f64
        }
    }

    /// Folds in counters gathered elsewhere (e.g. by another worker).
    pub fn merge(&mut self, other: &NodeTelemetry) {
        self.eval_count += other.eval_count;
        self.pass_count += other.pass_count;
        self.total_eval_cost += other.total_eval_cost;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PrunerKind {
    Leaf {
        /// Original filter predicate; decides full matches.
        predicate: Expr,
        /// Widened form used to rule partitions out.
        pruning: Expr,
    },
    And(Vec<PrunerNode>),
    Or(Vec<PrunerNode>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrunerNode {
    pub id: usize,
    pub kind: PrunerKind,
    pub enabled: bool,
}

impl PrunerNode {
    pub fn children(&self) -> &[PrunerNode] {
        match &self.kind {
            PrunerKind::And(c) | PrunerKind::Or(c) => c,
            PrunerKind::Leaf { .. } => &[],
        }
    }

    pub fn is_and(&self) -> bool {
        matches!(self.kind, PrunerKind::And(_))
    }

    fn visit<'a>(&'a self, f: &mut impl FnMut(&'a PrunerNode)) {
        f(self);
        for c in self.children() {
            c.visit(f);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutoffDecision {
    Keep,
    Disable,
}

/// Where a node hangs in the tree; only children of an AND may be cut off.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parent {
    Root,
    And,
    Or,
}

pub type TelemetryMap = BTreeMap<usize, NodeTelemetry>;

/// Per-node telemetry as exported in query stats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeReport {
    pub node_id: usize,
    pub label: String,
    pub eval_count: u64,
    pub pass_count: u64,
    pub total_eval_cost: f64,
    pub disabled: bool,
}

#[derive(Debug, Clone)]
pub struct PruningTree {
    root: PrunerNode,
    telemetry: TelemetryMap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneResult {
    /// Partitions that may hold qualifying rows, in input order.
    pub scan_set: Vec<usize>,
    /// Subset of `scan_set` whose rows all qualify.
    pub full_match_set: Vec<usize>,
    /// Verdict per input partition, in input order.
    pub classification: Vec<(usize, TriState)>,
    pub telemetry: Vec<NodeReport>,
}

impl PruningTree {
    /// Builds a tree from a filter predicate. Nested ANDs/ORs are flattened
    /// and node ids are assigned in pre-order starting at 0.
    pub fn build(predicate: &Expr) -> PruningTree {
        let mut next = 0;
        let root = Self::build_node(predicate, &mut next);
        PruningTree {
            root,
            telemetry: TelemetryMap::new(),
        }
    }

    /// Tree for a scan without filters: a single always-true leaf.
    pub fn trivial() -> PruningTree {
        Self::build(&lit(true))
    }

    fn build_node(e: &Expr, next: &mut usize) -> PrunerNode {
        let id = *next;
        *next += 1;
        let flatten = |children: &[Expr], want_and: bool| -> Vec<Expr> {
            let mut out = Vec::new();
            let mut stack: Vec<&Expr> = children.iter().rev().collect();
            while let Some(c) = stack.pop() {
                match c {
                    Expr::And { children } if want_and => stack.extend(children.iter().rev()),
                    Expr::Or { children } if !want_and => stack.extend(children.iter().rev()),
                    other => out.push(other.clone()),
                }
            }
            out
        };
        let kind = match e {
            Expr::And { children } | Expr::Or { children } if children.len() >= 2 => {
                let is_and = matches!(e, Expr::And { .. });
                let flat = flatten(children, is_and);
                let nodes = flat.iter().map(|c| Self::build_node(c, next)).collect();
                if is_and {
                    PrunerKind::And(nodes)
                } else {
                    PrunerKind::Or(nodes)
                }
            }
            Expr::And { children } | Expr::Or { children } if children.len() == 1 => {
                *next -= 1;
                return Self::build_node(&children[0], next);
            }
            leaf => PrunerKind::Leaf {
                predicate: leaf.clone(),
                pruning: widen_rewrite(leaf),
            },
        };
        PrunerNode {
            id,
            kind,
            enabled: true,
        }
    }

    pub fn root(&self) -> &PrunerNode {
        &self.root
    }

    pub fn telemetry(&self) -> &TelemetryMap {
        &self.telemetry
    }

    pub fn node(&self, id: usize) -> Option<&PrunerNode> {
        let mut found = None;
        self.root.visit(&mut |n| {
            if n.id == id {
                found = Some(n);
            }
        });
        found
    }

    /// Child ids of every inner node, in current evaluation order.
    pub fn child_order(&self, id: usize) -> Vec<usize> {
        self.node(id)
            .map(|n| n.children().iter().map(|c| c.id).collect())
            .unwrap_or_default()
    }

    pub fn report(&self) -> Vec<NodeReport> {
        let mut out = Vec::new();
        self.root.visit(&mut |n| {
            let t = self.telemetry.get(&n.id).copied().unwrap_or_default();
            let label = match &n.kind {
                PrunerKind::Leaf { predicate, .. } => predicate.to_string(),
                PrunerKind::And(_) => "AND".into(),
                PrunerKind::Or(_) => "OR".into(),
            };
            out.push(NodeReport {
                node_id: n.id,
                label,
                eval_count: t.eval_count,
                pass_count: t.pass_count,
                total_eval_cost: t.total_eval_cost,
                disabled: !n.enabled,
            });
        });
        out.sort_by_key(|r| r.node_id);
        out
    }

    /// Classifies one partition and records telemetry.
    pub fn classify(&mut self, stats: &dyn StatsSource, config: &TreeConfig) -> Result<TriState> {
        let (verdict, _) = eval_node(&self.root, stats, &mut self.telemetry, config)?;
        Ok(verdict)
    }

    /// Reorders children and applies cutoff everywhere in the tree.
    pub fn adapt(&mut self, remaining_partitions: usize, config: &TreeConfig) {
        adapt_node(&mut self.root, Parent::Root, &self.telemetry, remaining_partitions, config);
    }
}

fn eval_node(
    node: &PrunerNode,
    stats: &dyn StatsSource,
    tel: &mut TelemetryMap,
    config: &TreeConfig,
) -> Result<(TriState, f64)> {
    if !node.enabled {
        return Ok((TriState::Maybe, 0.0));
    }
    let (verdict, cost) = match &node.kind {
        PrunerKind::Leaf { predicate, pruning } => {
            let start = Instant::now();
            let mut verdict = eval_meta(pruning, stats)?;
            if verdict == TriState::AlwaysTrue && pruning != predicate {
                // widening may claim more than the original predicate
                verdict = eval_meta(predicate, stats)?;
            }
            let cost = match config.cost_mode {
                CostMode::Abstract => 1.0 + pruning.node_count() as f64,
                CostMode::WallClock => start.elapsed().as_nanos() as f64,
            };
            (verdict, cost)
        }
        PrunerKind::And(children) => {
            let mut acc = TriState::AlwaysTrue;
            let mut cost = 0.0;
            for c in children {
                let (v, k) = eval_node(c, stats, tel, config)?;
                cost += k;
                acc = acc.and(v);
                if acc == TriState::AlwaysFalse {
                    break;
                }
            }
            (acc, cost)
        }
        PrunerKind::Or(children) => {
            let mut acc = TriState::AlwaysFalse;
            let mut cost = 0.0;
            for c in children {
                let (v, k) = eval_node(c, stats, tel, config)?;
                cost += k;
                acc = acc.or(v);
                if acc == TriState::AlwaysTrue {
                    break;
                }
            }
            (acc, cost)
        }
    };
    let t = tel.entry(node.id).or_default();
    t.eval_count += 1;
    t.pass_count += u64::from(verdict.may_pass());
    t.total_eval_cost += cost;
    Ok((verdict, cost))
}

fn rank(t: &NodeTelemetry, is_and: bool) -> f64 {
    let cost = t.avg_cost().max(f64::MIN_POSITIVE);
    if is_and {
        t.prune_rate() / cost
    } else {
        t.pass_rate() / cost
    }
}

/// New evaluation order (child ids) for an AND/OR node.
///
/// AND children are ranked by descending `prune_rate / avg_cost`, OR
/// children by descending `pass_rate / avg_cost`, ties by ascending id.
/// Children still in warmup, and disabled ones, keep their slot.
pub fn reorder_children(node: &PrunerNode, telemetry: &TelemetryMap, warmup: u64) -> Vec<usize> {
    let children = node.children();
    let is_and = node.is_and();
    let warmed = |c: &PrunerNode| {
        c.enabled && telemetry.get(&c.id).is_some_and(|t| t.eval_count >= warmup)
    };
    let slots: Vec<usize> = (0..children.len()).filter(|&i| warmed(&children[i])).collect();
    let mut movable: Vec<&PrunerNode> = slots.iter().map(|&i| &children[i]).collect();
    movable.sort_by(|a, b| {
        let ra = rank(&telemetry[&a.id], is_and);
        let rb = rank(&telemetry[&b.id], is_and);
        rb.total_cmp(&ra).then(a.id.cmp(&b.id))
    });
    let mut order: Vec<usize> = children.iter().map(|c| c.id).collect();
    for (slot, node) in slots.into_iter().zip(movable) {
        order[slot] = node.id;
    }
    order
}

/// Decides whether a pruner should stop being evaluated.
///
/// Continuing costs `remaining * avg_cost` and saves
/// `prune_rate * remaining * scan_cost`; the node is disabled when the
/// saving does not exceed the cost. Only nodes directly below an AND
/// qualify.
pub fn cutoff_check(
    telemetry: &NodeTelemetry,
    parent: Parent,
    remaining_partitions: usize,
    config: &TreeConfig,
) -> CutoffDecision {
    if parent != Parent::And || telemetry.eval_count < config.warmup {
        return CutoffDecision::Keep;
    }
    let remaining = remaining_partitions as f64;
    let benefit = telemetry.prune_rate() * remaining * config.scan_cost
        - remaining * telemetry.avg_cost();
    if benefit <= 0.0 {
        CutoffDecision::Disable
    } else {
        CutoffDecision::Keep
    }
}

fn adapt_node(
    node: &mut PrunerNode,
    parent: Parent,
    tel: &TelemetryMap,
    remaining: usize,
    config: &TreeConfig,
) {
    if !node.enabled {
        return;
    }
    let is_and = node.is_and();
    if !matches!(node.kind, PrunerKind::Leaf { .. }) {
        let order = reorder_children(node, tel, config.warmup);
        let (PrunerKind::And(children) | PrunerKind::Or(children)) = &mut node.kind else {
            unreachable!()
        };
        children.sort_by_key(|c| order.iter().position(|&id| id == c.id));
        let here = if is_and { Parent::And } else { Parent::Or };
        for c in children.iter_mut() {
            adapt_node(c, here, tel, remaining, config);
        }
    }
    if let Some(t) = tel.get(&node.id) {
        if cutoff_check(t, parent, remaining, config) == CutoffDecision::Disable {
            node.enabled = false;
        }
    }
}

/// Classifies each partition with the pruning tree.
///
/// Every `adapt_interval` partitions the tree is reordered and cut back
/// (when `config.adaptive`). The scan set keeps input order.
pub fn prune_scan_set<'a, S>(
    tree: &mut PruningTree,
    partitions: impl IntoIterator<Item = (usize, &'a S)>,
    config: &TreeConfig,
) -> Result<PruneResult>
where
    S: StatsSource + 'a,
{
    let parts: Vec<(usize, &S)> = partitions.into_iter().collect();
    let total = parts.len();
    let mut classification = Vec::with_capacity(total);
    for (done, (id, stats)) in parts.into_iter().enumerate() {
        let verdict = eval_node(&tree.root, stats, &mut tree.telemetry, config)?.0;
        classification.push((id, verdict));
        let done = done + 1;
        if config.adaptive
            && config.adapt_interval > 0
            && done % config.adapt_interval == 0
            && done < total
        {
            tree.adapt(total - done, config);
        }
    }
    let scan_set = classification
        .iter()
        .filter(|(_, v)| v.may_pass())
        .map(|(id, _)| *id)
        .collect();
    let full_match_set = classification
        .iter()
        .filter(|(_, v)| *v == TriState::AlwaysTrue)
        .map(|(id, _)| *id)
        .collect();
    Ok(PruneResult {
        scan_set,
        full_match_set,
        classification,
        telemetry: tree.report(),
    })
}
