use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::limit::LimitReason;
use crate::pruning_tree::NodeReport;
use crate::topk::ScanOrderStrategy;
use crate::value::Value;

pub const STATS_VERSION: u32 = 1;

/// Pruning techniques in the order they get to claim a partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Technique {
    Filter,
    Limit,
    Join,
    Topk,
}

impl Technique {
    pub const ALL: [Technique; 4] = [
        Technique::Filter,
        Technique::Limit,
        Technique::Join,
        Technique::Topk,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Technique::Filter => "filter",
            Technique::Limit => "limit",
            Technique::Join => "join",
            Technique::Topk => "topk",
        }
    }

    pub fn parse(s: &str) -> Option<Technique> {
        Technique::ALL.into_iter().find(|t| t.name() == s)
    }
}

/// What happened to one partition of a scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fate {
    PrunedByFilter,
    PrunedByLimit,
    PrunedByJoin,
    PrunedByTopk,
    /// Never reached because a LIMIT was already satisfied; counted as
    /// LIMIT pruning.
    LimitHalted,
    Scanned,
}

impl Fate {
    pub fn technique(self) -> Option<Technique> {
        match self {
            Fate::PrunedByFilter => Some(Technique::Filter),
            Fate::PrunedByLimit | Fate::LimitHalted => Some(Technique::Limit),
            Fate::PrunedByJoin => Some(Technique::Join),
            Fate::PrunedByTopk => Some(Technique::Topk),
            Fate::Scanned => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionFate {
    pub partition_id: usize,
    pub fate: Fate,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScanStats {
    pub scan_index: usize,
    pub table: String,
    pub alias: String,
    pub has_predicate: bool,
    pub partitions_total: usize,
    pub pruned_by_filter: usize,
    pub pruned_by_limit: usize,
    pub pruned_by_join: usize,
    pub pruned_by_topk: usize,
    pub scanned: usize,
    /// Part of `pruned_by_limit` that was skipped at run time.
    pub limit_halted: usize,
    pub full_match: usize,
    /// For LIMIT-annotated scans: partitions that would have sufficed in
    /// the order they were read.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub minimal_needed: Option<usize>,
    pub partitions: Vec<PartitionFate>,
    pub filter_telemetry: Vec<NodeReport>,
}

impl ScanStats {
    pub fn pruned(&self, t: Technique) -> usize {
        match t {
            Technique::Filter => self.pruned_by_filter,
            Technique::Limit => self.pruned_by_limit,
            Technique::Join => self.pruned_by_join,
            Technique::Topk => self.pruned_by_topk,
        }
    }

    pub fn pruned_total(&self) -> usize {
        Technique::ALL.iter().map(|&t| self.pruned(t)).sum()
    }

    /// Recomputes the counters from the per-partition fates.
    pub fn recount(&mut self) {
        let count = |f: &dyn Fn(Fate) -> bool| self.partitions.iter().filter(|p| f(p.fate)).count();
        let pf = count(&|f| f == Fate::PrunedByFilter);
        let pl = count(&|f| f.technique() == Some(Technique::Limit));
        let pj = count(&|f| f == Fate::PrunedByJoin);
        let pt = count(&|f| f == Fate::PrunedByTopk);
        let sc = count(&|f| f == Fate::Scanned);
        let lh = count(&|f| f == Fate::LimitHalted);
        self.pruned_by_filter = pf;
        self.pruned_by_limit = pl;
        self.pruned_by_join = pj;
        self.pruned_by_topk = pt;
        self.scanned = sc;
        self.limit_halted = lh;
    }

    /// Every partition has exactly one fate and the counters add up.
    pub fn check_conservation(&self) -> Result<(), String> {
        let ids: BTreeSet<usize> = self.partitions.iter().map(|p| p.partition_id).collect();
        if ids.len() != self.partitions.len() {
            return Err(format!("scan {}: a partition has two fates", self.scan_index));
        }
        if ids.len() != self.partitions_total {
            return Err(format!(
                "scan {}: {} fates for {} partitions",
                self.scan_index,
                ids.len(),
                self.partitions_total
            ));
        }
        if self.pruned_total() + self.scanned != self.partitions_total {
            return Err(format!(
                "scan {}: pruned {} + scanned {} != total {}",
                self.scan_index,
                self.pruned_total(),
                self.scanned,
                self.partitions_total
            ));
        }
        let mut again = self.clone();
        again.recount();
        if again != *self {
            return Err(format!("scan {}: counters disagree with fates", self.scan_index));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitPruningStats {
    pub applied: bool,
    pub reason: LimitReason,
    pub effective_k: usize,
    pub partitions_before: usize,
    pub partitions_after: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JoinPruningStats {
    pub probe_scan: usize,
    pub summary_mode: String,
    pub summary_size: usize,
    pub probe_partitions_before: usize,
    pub probe_partitions_after: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopKShape {
    Scan,
    JoinProbe,
    OuterJoinBuild,
    Aggregation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopKPruningStats {
    pub eligible: bool,
    pub plan_shape: Option<TopKShape>,
    pub initialized_boundary: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_boundary_value: Option<Value>,
    pub partitions_pruned: usize,
    pub partitions_scanned: usize,
    pub strategy: ScanOrderStrategy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub scan_index: usize,
    pub partition_id: usize,
    pub fate: Fate,
    /// Top-k bound in force when the decision was made.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryStats {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub scans: Vec<ScanStats>,
    pub limit_pruning: Option<LimitPruningStats>,
    pub join_pruning: Vec<JoinPruningStats>,
    pub topk_pruning: Vec<TopKPruningStats>,
    pub rows_out: usize,
    pub wall_time_ms: f64,
    pub trace: Vec<TraceEvent>,
}

impl QueryStats {
    pub fn partitions_total(&self) -> usize {
        self.scans.iter().map(|s| s.partitions_total).sum()
    }

    pub fn pruned(&self, t: Technique) -> usize {
        self.scans.iter().map(|s| s.pruned(t)).sum()
    }

    pub fn scanned(&self) -> usize {
        self.scans.iter().map(|s| s.scanned).sum()
    }

    /// Whether the technique had a chance to prune in this query. Never
    /// false when [`QueryStats::applied`] is true.
    pub fn eligible(&self, t: Technique) -> bool {
        match t {
            Technique::Filter => self.scans.iter().any(|s| s.has_predicate),
            Technique::Limit => self
                .limit_pruning
                .as_ref()
                .is_some_and(|l| l.reason != LimitReason::UnsupportedShape)
                || self.pruned(Technique::Limit) > 0,
            Technique::Join => !self.join_pruning.is_empty(),
            Technique::Topk => self.topk_pruning.iter().any(|t| t.eligible),
        }
    }

    /// Whether the technique pruned at least one partition.
    pub fn applied(&self, t: Technique) -> bool {
        self.pruned(t) > 0
    }

    pub fn check_conservation(&self) -> Result<(), String> {
        self.scans.iter().try_for_each(ScanStats::check_conservation)
    }

    pub fn scan(&self, table_or_alias: &str) -> Option<&ScanStats> {
        self.scans
            .iter()
            .find(|s| s.alias == table_or_alias)
            .or_else(|| self.scans.iter().find(|s| s.table == table_or_alias))
    }
}
