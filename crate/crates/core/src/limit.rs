//! LIMIT pushdown and scan-set reduction with fully-matching partitions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::plan::{JoinKind, Plan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LimitSpec {
    pub limit: usize,
    pub offset: usize,
}

impl LimitSpec {
    /// Rows that must be produced before the offset is skipped.
    pub fn effective_k(&self) -> usize {
        self.limit.saturating_add(self.offset)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitReason {
    MinimalAlready,
    UnsupportedShape,
    InsufficientFullMatch,
    Applied,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LimitOutcome {
    pub scan_set: Vec<usize>,
    pub reason: LimitReason,
}

/// Scans reached by a LIMIT, keyed by scan index (pre-order position, see
/// [`Plan::scans`]), with the number of rows they must deliver.
///
/// The annotation passes through projections and through the filter chain
/// sitting directly on a scan (the planner then relies on fully-matching
/// partitions only). Aggregations, top-k, inner joins and any other filter
/// stop it. A LEFT OUTER join forwards it to its preserved (build) input:
/// every preserved row yields at least one output row.
pub fn limit_pushdown(plan: &Plan) -> BTreeMap<usize, usize> {
    let mut out = BTreeMap::new();
    let mut next = 0;
    walk(plan, None, &mut next, &mut out);
    out
}

fn walk(plan: &Plan, k: Option<usize>, next: &mut usize, out: &mut BTreeMap<usize, usize>) {
    match plan {
        Plan::Scan { .. } => {
            if let Some(k) = k {
                out.insert(*next, k);
            }
            *next += 1;
        }
        Plan::Limit {
            input,
            limit,
            offset,
        } => {
            let needed = match k {
                Some(outer) => (*limit).min(outer),
                None => *limit,
            };
            walk(input, Some(needed.saturating_add(*offset)), next, out);
        }
        Plan::Project { input, .. } => walk(input, k, next, out),
        Plan::Filter { input, .. } => {
            let k = if filter_chain_over_scan(input) { k } else { None };
            walk(input, k, next, out);
        }
        Plan::HashJoin {
            kind, build, probe, ..
        } => {
            let bk = if *kind == JoinKind::LeftOuter { k } else { None };
            walk(build, bk, next, out);
            walk(probe, None, next, out);
        }
        Plan::GroupBy { input, .. } | Plan::TopK { input, .. } => walk(input, None, next, out),
    }
}

fn filter_chain_over_scan(plan: &Plan) -> bool {
    match plan {
        Plan::Scan { .. } => true,
        Plan::Filter { input, .. } => filter_chain_over_scan(input),
        _ => false,
    }
}

/// Reduces a scan set for a LIMIT of `effective_k` rows.
///
/// When the fully-matching partitions hold at least `effective_k` rows,
/// returns the fewest of them that do (largest first, ties by id), in scan
/// set order. Otherwise returns the whole scan set with fully-matching
/// partitions moved to the front.
pub fn prune_for_limit(
    scan_set: &[usize],
    full_match_set: &[usize],
    row_count: impl Fn(usize) -> usize,
    effective_k: usize,
) -> Vec<usize> {
    limit_decision(scan_set, full_match_set, row_count, effective_k).scan_set
}

/// [`prune_for_limit`] plus the reason reported in query stats.
pub fn limit_decision(
    scan_set: &[usize],
    full_match_set: &[usize],
    row_count: impl Fn(usize) -> usize,
    effective_k: usize,
) -> LimitOutcome {
    if effective_k == 0 {
        let reason = if scan_set.is_empty() {
            LimitReason::MinimalAlready
        } else {
            LimitReason::Applied
        };
        return LimitOutcome {
            scan_set: vec![],
            reason,
        };
    }
    let full: Vec<usize> = scan_set
        .iter()
        .copied()
        .filter(|id| full_match_set.contains(id))
        .collect();
    let total: usize = full.iter().map(|&id| row_count(id)).sum();
    if total >= effective_k {
        let mut by_size = full.clone();
        by_size.sort_by(|&a, &b| row_count(b).cmp(&row_count(a)).then(a.cmp(&b)));
        let mut chosen = Vec::new();
        let mut sum = 0;
        for id in by_size {
            if sum >= effective_k {
                break;
            }
            sum += row_count(id);
            chosen.push(id);
        }
        let reduced: Vec<usize> = scan_set.iter().copied().filter(|id| chosen.contains(id)).collect();
        let reason = if reduced.len() < scan_set.len() {
            LimitReason::Applied
        } else {
            LimitReason::MinimalAlready
        };
        return LimitOutcome {
            scan_set: reduced,
            reason,
        };
    }
    let reason = if scan_set.len() <= 1 {
        LimitReason::MinimalAlready
    } else {
        LimitReason::InsufficientFullMatch
    };
    let mut reordered = full;
    reordered.extend(scan_set.iter().copied().filter(|id| !full_match_set.contains(id)));
    LimitOutcome {
        scan_set: reordered,
        reason,
    }
}
