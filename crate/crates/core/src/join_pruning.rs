//! Build-side key summaries and probe-side partition pruning for hash joins.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::ColumnStats;
use crate::value::{DataType, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryConfig {
    /// Maximum number of ranges in a range summary.
    pub budget: usize,
    /// Distinct-key count up to which the exact key set is kept.
    pub exact_threshold: usize,
}

impl Default for SummaryConfig {
    fn default() -> Self {
        SummaryConfig {
            budget: 64,
            exact_threshold: 1024,
        }
    }
}

/// Over-approximation of the set of non-null build keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum BuildSummary {
    Empty,
    /// Sorted distinct keys.
    ExactSet { values: Vec<Value> },
    /// Sorted, disjoint closed intervals.
    RangeSet { ranges: Vec<(Value, Value)> },
    GlobalMinMax { min: Value, max: Value },
}

impl BuildSummary {
    pub fn mode(&self) -> &'static str {
        match self {
            BuildSummary::Empty => "empty",
            BuildSummary::ExactSet { .. } => "exact_set",
            BuildSummary::RangeSet { .. } => "range_set",
            BuildSummary::GlobalMinMax { .. } => "global_min_max",
        }
    }

    pub fn size(&self) -> usize {
        match self {
            BuildSummary::Empty => 0,
            BuildSummary::ExactSet { values } => values.len(),
            BuildSummary::RangeSet { ranges } => ranges.len(),
            BuildSummary::GlobalMinMax { .. } => 1,
        }
    }

    /// Whether `v` may be a build key.
    pub fn contains(&self, v: &Value) -> bool {
        if v.is_null() {
            return false;
        }
        match self {
            BuildSummary::Empty => false,
            BuildSummary::ExactSet { values } => values.binary_search_by(|x| x.total_cmp(v)).is_ok(),
            BuildSummary::RangeSet { ranges } => ranges
                .iter()
                .any(|(lo, hi)| lo.total_cmp(v).is_le() && v.total_cmp(hi).is_le()),
            BuildSummary::GlobalMinMax { min, max } => {
                min.total_cmp(v).is_le() && v.total_cmp(max).is_le()
            }
        }
    }

    /// Whether some key in the summary lies in `[lo, hi]`.
    pub fn overlaps(&self, lo: &Value, hi: &Value) -> bool {
        let meets = |a: &Value, b: &Value| lo.total_cmp(b).is_le() && a.total_cmp(hi).is_le();
        match self {
            BuildSummary::Empty => false,
            BuildSummary::ExactSet { values } => {
                let i = values.partition_point(|x| x.total_cmp(lo) == Ordering::Less);
                values.get(i).is_some_and(|x| x.total_cmp(hi).is_le())
            }
            BuildSummary::RangeSet { ranges } => {
                let i = ranges.partition_point(|(_, r_hi)| r_hi.total_cmp(lo) == Ordering::Less);
                ranges.get(i).is_some_and(|(r_lo, r_hi)| meets(r_lo, r_hi))
            }
            BuildSummary::GlobalMinMax { min, max } => meets(min, max),
        }
    }
}

fn family(t: DataType) -> u8 {
    match t {
        DataType::Int64 | DataType::Float64 => 0,
        DataType::Utf8 => 1,
        DataType::Bool => 2,
        DataType::Null => 3,
    }
}

/// Distance used to pick which neighbouring keys to merge first.
fn gap(a: &Value, b: &Value) -> f64 {
    match (a, b) {
        (Value::Int(x), Value::Int(y)) => (*y as i128 - *x as i128) as f64,
        (Value::Str(x), Value::Str(y)) => {
            let head = |s: &str| {
                let mut buf = [0u8; 8];
                let n = s.len().min(8);
                buf[..n].copy_from_slice(&s.as_bytes()[..n]);
                u64::from_be_bytes(buf)
            };
            head(y).saturating_sub(head(x)) as f64
        }
        (Value::Bool(_), Value::Bool(_)) => 1.0,
        _ => match (a.as_f64(), b.as_f64()) {
            (Some(x), Some(y)) if (y - x).is_finite() => y - x,
            _ => f64::INFINITY,
        },
    }
}

/// No value of the key type lies strictly between `a` and `b`.
fn adjacent(a: &Value, b: &Value) -> bool {
    matches!((a, b), (Value::Int(x), Value::Int(y)) if (*y as i128) - (*x as i128) <= 1)
}

/// Summarizes the build keys; nulls are skipped.
///
/// Up to `exact_threshold` distinct keys are kept exactly. Beyond that the
/// sorted keys are split at the `budget - 1` widest gaps into at most
/// `budget` ranges (one range for `budget <= 1`). Splitting at the widest
/// gaps means a larger budget only ever adds cut points.
pub fn summarize_build(
    keys: impl IntoIterator<Item = Value>,
    budget: usize,
    exact_threshold: usize,
) -> Result<BuildSummary> {
    let mut values: Vec<Value> = keys.into_iter().filter(|v| !v.is_null()).collect();
    if let Some(first) = values.first() {
        let f = family(first.data_type());
        if let Some(bad) = values.iter().find(|v| family(v.data_type()) != f) {
            return Err(Error::Type(format!(
                "mixed join key types {} and {}",
                first.data_type(),
                bad.data_type()
            )));
        }
    }
    values.sort_by(Value::total_cmp);
    values.dedup_by(|a, b| a.total_cmp(b) == Ordering::Equal);
    if values.is_empty() {
        return Ok(BuildSummary::Empty);
    }
    if values.len() <= exact_threshold {
        return Ok(BuildSummary::ExactSet { values });
    }
    let (first, last) = (values[0].clone(), values[values.len() - 1].clone());
    if budget <= 1 {
        return Ok(BuildSummary::GlobalMinMax {
            min: first,
            max: last,
        });
    }
    // candidate cut points: positions i with a gap between values[i] and values[i + 1]
    let mut cuts: Vec<(usize, f64)> = values
        .windows(2)
        .enumerate()
        .filter(|(_, w)| !adjacent(&w[0], &w[1]))
        .map(|(i, w)| (i, gap(&w[0], &w[1])))
        .collect();
    cuts.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    cuts.truncate(budget - 1);
    let mut cut_at: Vec<usize> = cuts.into_iter().map(|(i, _)| i).collect();
    cut_at.sort_unstable();
    let mut ranges = Vec::with_capacity(cut_at.len() + 1);
    let mut start = 0;
    for i in cut_at {
        ranges.push((values[start].clone(), values[i].clone()));
        start = i + 1;
    }
    ranges.push((values[start].clone(), last));
    Ok(BuildSummary::RangeSet { ranges })
}

/// Keeps the probe partitions whose join-key range meets the summary.
/// Partitions whose key column is entirely null are dropped: null keys
/// never match.
pub fn prune_probe(partitions: &[(usize, &ColumnStats)], summary: &BuildSummary) -> Vec<usize> {
    partitions
        .iter()
        .filter(|(_, s)| probe_may_match(s, summary))
        .map(|(id, _)| *id)
        .collect()
}

pub fn probe_may_match(stats: &ColumnStats, summary: &BuildSummary) -> bool {
    match (&stats.min, &stats.max) {
        (Some(lo), Some(hi)) => summary.overlaps(lo, hi),
        _ => false,
    }
}
