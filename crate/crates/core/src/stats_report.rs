//! Pruning ratios per query and flow reports over a workload.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::exec::{QueryStats, Technique};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruningRatios {
    /// `None` when the query touched no partitions.
    pub overall: Option<f64>,
    pub filter: Option<f64>,
    pub limit: Option<f64>,
    pub join: Option<f64>,
    pub topk: Option<f64>,
}

impl PruningRatios {
    pub fn get(&self, t: Technique) -> Option<f64> {
        match t {
            Technique::Filter => self.filter,
            Technique::Limit => self.limit,
            Technique::Join => self.join,
            Technique::Topk => self.topk,
        }
    }
}

/// Pruned partitions over all partitions of all scans, scans without a
/// predicate included.
pub fn pruning_ratio(stats: &QueryStats) -> PruningRatios {
    let total = stats.partitions_total();
    let ratio = |n: usize| (total > 0).then(|| n as f64 / total as f64);
    let pruned: usize = Technique::ALL.iter().map(|&t| stats.pruned(t)).sum();
    PruningRatios {
        overall: ratio(pruned),
        filter: ratio(stats.pruned(Technique::Filter)),
        limit: ratio(stats.pruned(Technique::Limit)),
        join: ratio(stats.pruned(Technique::Join)),
        topk: ratio(stats.pruned(Technique::Topk)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub count: usize,
    pub min: Option<f64>,
    pub p10: Option<f64>,
    pub p25: Option<f64>,
    pub median: Option<f64>,
    pub mean: Option<f64>,
    pub p75: Option<f64>,
    pub p90: Option<f64>,
    pub p99: Option<f64>,
    pub max: Option<f64>,
}

/// Nearest-rank percentile of sorted `values`, `p` in (0, 100].
pub fn percentile(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    Some(sorted[rank.clamp(1, sorted.len()) - 1])
}

impl Distribution {
    pub fn of(values: &[f64]) -> Distribution {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let mean = (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
        Distribution {
            count: v.len(),
            min: v.first().copied(),
            p10: percentile(&v, 10.0),
            p25: percentile(&v, 25.0),
            median: percentile(&v, 50.0),
            mean,
            p75: percentile(&v, 75.0),
            p90: percentile(&v, 90.0),
            p99: percentile(&v, 99.0),
            max: v.last().copied(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TechniqueSummary {
    pub technique: Technique,
    /// Queries where the technique had a chance to prune.
    pub eligible: usize,
    /// Queries where it pruned at least one partition.
    pub applied: usize,
    /// Ratios over the queries where it applied.
    pub ratios: Distribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowEdge {
    pub from: Technique,
    pub to: Technique,
    /// Queries where both techniques pruned.
    pub queries: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadReport {
    pub queries: usize,
    pub partitions_total: usize,
    pub partitions_pruned: usize,
    pub aggregate_pruning_ratio: Option<f64>,
    pub overall: Distribution,
    /// Queries where nothing was pruned.
    pub unpruned_queries: usize,
    pub techniques: Vec<TechniqueSummary>,
    pub flow: Vec<FlowEdge>,
    pub per_query: Vec<QueryStats>,
}

pub fn flow_report(stats: &[QueryStats]) -> WorkloadReport {
    let total: usize = stats.iter().map(QueryStats::partitions_total).sum();
    let pruned: usize = stats
        .iter()
        .map(|s| Technique::ALL.iter().map(|&t| s.pruned(t)).sum::<usize>())
        .sum();
    let ratios: Vec<PruningRatios> = stats.iter().map(pruning_ratio).collect();
    let techniques = Technique::ALL
        .iter()
        .map(|&t| {
            let applied: Vec<f64> = stats
                .iter()
                .zip(&ratios)
                .filter(|(s, _)| s.applied(t))
                .filter_map(|(_, r)| r.get(t))
                .collect();
            TechniqueSummary {
                technique: t,
                eligible: stats.iter().filter(|s| s.eligible(t)).count(),
                applied: stats.iter().filter(|s| s.applied(t)).count(),
                ratios: Distribution::of(&applied),
            }
        })
        .collect();
    let mut flow = Vec::new();
    for (i, &a) in Technique::ALL.iter().enumerate() {
        for &b in &Technique::ALL[i + 1..] {
            flow.push(FlowEdge {
                from: a,
                to: b,
                queries: stats.iter().filter(|s| s.applied(a) && s.applied(b)).count(),
            });
        }
    }
    let overall: Vec<f64> = ratios.iter().filter_map(|r| r.overall).collect();
    WorkloadReport {
        queries: stats.len(),
        partitions_total: total,
        partitions_pruned: pruned,
        aggregate_pruning_ratio: (total > 0).then(|| pruned as f64 / total as f64),
        overall: Distribution::of(&overall),
        unpruned_queries: stats
            .iter()
            .filter(|s| !Technique::ALL.iter().any(|&t| s.applied(t)))
            .count(),
        techniques,
        flow,
        per_query: stats.to_vec(),
    }
}

/// One line per (query, technique) with a defined ratio.
pub fn write_distribution_csv<W: Write>(stats: &[QueryStats], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["query", "label", "technique", "applied", "ratio"])?;
    for (i, s) in stats.iter().enumerate() {
        let r = pruning_ratio(s);
        for &t in &Technique::ALL {
            if let Some(ratio) = r.get(t) {
                w.write_record([
                    i.to_string(),
                    s.label.clone().unwrap_or_default(),
                    t.name().to_string(),
                    s.applied(t).to_string(),
                    ratio.to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::{Fate, PartitionFate, ScanStats, STATS_VERSION};

    fn query(fates: &[Fate]) -> QueryStats {
        let mut scan = ScanStats {
            partitions_total: fates.len(),
            partitions: fates
                .iter()
                .enumerate()
                .map(|(i, &fate)| PartitionFate {
                    partition_id: i + 1,
                    fate,
                })
                .collect(),
            ..ScanStats::default()
        };
        scan.recount();
        QueryStats {
            version: STATS_VERSION,
            label: None,
            scans: vec![scan],
            limit_pruning: None,
            join_pruning: vec![],
            topk_pruning: vec![],
            rows_out: 0,
            wall_time_ms: 0.0,
            trace: vec![],
        }
    }

    #[test]
    fn ratios() {
        use Fate::*;
        let q = query(&[PrunedByFilter, Scanned, Scanned, Scanned]);
        assert_eq!(pruning_ratio(&q).filter, Some(0.25));
        assert_eq!(pruning_ratio(&q).overall, Some(0.25));
        assert_eq!(pruning_ratio(&query(&[PrunedByJoin, PrunedByJoin])).overall, Some(1.0));
        assert_eq!(pruning_ratio(&query(&[Scanned])).overall, Some(0.0));
        assert_eq!(pruning_ratio(&query(&[])).overall, None);
    }

    #[test]
    fn flow_edges() {
        use Fate::*;
        let r = flow_report(&[query(&[PrunedByFilter, Scanned])]);
        assert_eq!(r.techniques[0].applied, 1);
        assert!(r.flow.iter().all(|e| e.queries == 0));
        let r = flow_report(&[query(&[PrunedByFilter, PrunedByJoin, Scanned])]);
        let e = r
            .flow
            .iter()
            .find(|e| e.from == Technique::Filter && e.to == Technique::Join)
            .unwrap();
        assert_eq!(e.queries, 1);
        assert_eq!(r.flow.len(), 6);
    }

    #[test]
    fn nearest_rank() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile(&v, 50.0), Some(2.0));
        assert_eq!(percentile(&v, 75.0), Some(3.0));
        assert_eq!(percentile(&v, 100.0), Some(4.0));
        assert_eq!(percentile(&v, 1.0), Some(1.0));
        assert_eq!(percentile(&[], 50.0), None);
    }
}
