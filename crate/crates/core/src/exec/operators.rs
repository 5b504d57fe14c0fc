//! Pull-based operators. Scans hand out one batch per partition; every
//! other operator runs on the calling thread.

use std::cell::RefCell;
use std::collections::{BinaryHeap, HashMap, VecDeque};
use std::rc::Rc;
use std::sync::Arc;

use super::stats::{Fate, JoinPruningStats, PartitionFate, TraceEvent};
use crate::error::{Error, Result};
use crate::expr::{derive_interval, BoundExpr, Expr};
use crate::join_pruning::{summarize_build, BuildSummary, SummaryConfig};
use crate::partition::{MicroPartition, Row, Table};
use crate::plan::{AggFunc, Direction, JoinKind};
use crate::topk::{value_rank, Bound, BoundaryCell, TopKState};
use crate::value::Value;

pub(crate) type Batch = Vec<Row>;

pub(crate) trait Operator {
    fn next_batch(&mut self) -> Result<Option<Batch>>;
}

pub(crate) type Shared<T> = Rc<RefCell<T>>;

#[derive(Debug, Default)]
pub(crate) struct ScanRuntime {
    pub fates: Vec<PartitionFate>,
    pub minimal_needed: Option<usize>,
}

#[derive(Debug, Default)]
pub(crate) struct JoinSlot {
    pub summary: Option<BuildSummary>,
    pub stats: Option<JoinPruningStats>,
}

pub(crate) struct ScanOp {
    pub index: usize,
    pub table: Arc<Table>,
    pub predicate: Option<BoundExpr>,
    pub queue: VecDeque<usize>,
    pub buffer: VecDeque<Batch>,
    pub topk: Option<(Arc<BoundaryCell>, Expr)>,
    pub join: Option<(Shared<JoinSlot>, Expr)>,
    pub join_done: bool,
    pub row_cap: Option<usize>,
    pub emitted: usize,
    pub loaded: usize,
    pub workers: usize,
    pub runtime: Shared<ScanRuntime>,
    pub trace: Option<Shared<Vec<TraceEvent>>>,
}

fn load(part: &MicroPartition, predicate: Option<&BoundExpr>) -> Result<Batch> {
    let mut out = Vec::new();
    for i in 0..part.num_rows() {
        let row = part.row(i);
        if predicate.map_or(Ok(true), |p| p.passes(&row))? {
            out.push(row);
        }
    }
    Ok(out)
}

impl ScanOp {
    fn record(&self, id: usize, fate: Fate) {
        self.runtime.borrow_mut().fates.push(PartitionFate {
            partition_id: id,
            fate,
        });
        if let Some(t) = &self.trace {
            let boundary = self
                .topk
                .as_ref()
                .and_then(|(c, _)| c.get())
                .map(|b| b.value);
            t.borrow_mut().push(TraceEvent {
                scan_index: self.index,
                partition_id: id,
                fate,
                boundary,
            });
        }
    }

    fn part(&self, id: usize) -> &MicroPartition {
        self.table.partition(id).expect("planned partition exists")
    }

    /// Drops probe partitions that cannot meet the build-side summary.
    fn apply_join_pruning(&mut self) -> Result<()> {
        self.join_done = true;
        let Some((slot, key)) = self.join.clone() else {
            return Ok(());
        };
        let Some(summary) = slot.borrow().summary.clone() else {
            return Ok(());
        };
        let before = self.queue.len();
        let mut kept = VecDeque::new();
        for id in std::mem::take(&mut self.queue) {
            let iv = derive_interval(&key, self.part(id))?;
            let keep = match (&summary, iv.has_values, &iv.lo, &iv.hi) {
                (BuildSummary::Empty, ..) | (_, false, ..) => false,
                (s, true, Some(lo), Some(hi)) => s.overlaps(lo, hi),
                _ => true,
            };
            if keep {
                kept.push_back(id);
            } else {
                self.record(id, Fate::PrunedByJoin);
            }
        }
        self.queue = kept;
        slot.borrow_mut().stats = Some(JoinPruningStats {
            probe_scan: self.index,
            summary_mode: summary.mode().to_string(),
            summary_size: summary.size(),
            probe_partitions_before: before,
            probe_partitions_after: self.queue.len(),
        });
        Ok(())
    }

    fn topk_prunes(&self, id: usize) -> Result<bool> {
        match &self.topk {
            Some((cell, order)) if cell.get().is_some() => {
                Ok(cell.should_prune_interval(&derive_interval(order, self.part(id))?))
            }
            _ => Ok(false),
        }
    }

    fn dispatch_wave(&mut self) -> Result<()> {
        let mut wave = Vec::with_capacity(self.workers);
        while wave.len() < self.workers.max(1) {
            let Some(id) = self.queue.pop_front() else {
                break;
            };
            if self.topk_prunes(id)? {
                self.record(id, Fate::PrunedByTopk);
                continue;
            }
            wave.push(id);
        }
        let pred = self.predicate.as_ref();
        let batches: Vec<Result<Batch>> = if wave.len() <= 1 {
            wave.iter().map(|&id| load(self.part(id), pred)).collect()
        } else {
            let parts: Vec<&MicroPartition> = wave.iter().map(|&id| self.part(id)).collect();
            std::thread::scope(|s| {
                let handles: Vec<_> = parts
                    .iter()
                    .map(|&p| s.spawn(move || load(p, pred)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| {
                        h.join()
                            .unwrap_or_else(|_| Err(Error::Plan("scan worker panicked".into())))
                    })
                    .collect()
            })
        };
        for (id, batch) in wave.into_iter().zip(batches) {
            self.record(id, Fate::Scanned);
            self.buffer.push_back(batch?);
        }
        Ok(())
    }
}

impl Operator for ScanOp {
    fn next_batch(&mut self) -> Result<Option<Batch>> {
        if !self.join_done {
            self.apply_join_pruning()?;
        }
        loop {
            if let Some(b) = self.buffer.pop_front() {
                self.emitted += b.len();
                self.loaded += 1;
                if let Some(cap) = self.row_cap {
                    let mut rt = self.runtime.borrow_mut();
                    if self.emitted >= cap && rt.minimal_needed.is_none() {
                        rt.minimal_needed = Some(self.loaded);
                    }
                }
                return Ok(Some(b));
            }
            if self.queue.is_empty() || self.row_cap.is_some_and(|c| self.emitted >= c) {
                return Ok(None);
            }
            self.dispatch_wave()?;
        }
    }
}

pub(crate) struct FilterOp {
    pub input: Box<dyn Operator>,
    pub predicate: BoundExpr,
}

impl Operator for FilterOp {
    fn next_batch(&mut self) -> Result<Option<Batch>> {
        let Some(batch) = self.input.next_batch()? else {
            return Ok(None);
        };
        let mut out = Vec::with_capacity(batch.len());
        for row in batch {
            if self.predicate.passes(&row)? {
                out.push(row);
            }
        }
        Ok(Some(out))
    }
}

pub(crate) struct ProjectOp {
    pub input: Box<dyn Operator>,
    pub exprs: Vec<BoundExpr>,
}

impl Operator for ProjectOp {
    fn next_batch(&mut self) -> Result<Option<Batch>> {
        let Some(batch) = self.input.next_batch()? else {
            return Ok(None);
        };
        batch
            .iter()
            .map(|row| self.exprs.iter().map(|e| e.eval(row)).collect())
            .collect::<Result<Vec<Row>>>()
            .map(Some)
    }
}

pub(crate) struct HashJoinOp {
    pub kind: JoinKind,
    pub build: Box<dyn Operator>,
    pub probe: Box<dyn Operator>,
    pub build_key: BoundExpr,
    pub probe_key: BoundExpr,
    pub probe_width: usize,
    pub slot: Option<Shared<JoinSlot>>,
    pub summary_config: SummaryConfig,
    pub state: JoinState,
}

#[derive(Default)]
pub(crate) struct JoinState {
    built: bool,
    rows: Vec<Row>,
    index: HashMap<Value, Vec<usize>>,
    matched: Vec<bool>,
    probe_done: bool,
    finished: bool,
}

impl HashJoinOp {
    fn build_side(&mut self) -> Result<()> {
        let st = &mut self.state;
        let mut keys = Vec::new();
        while let Some(batch) = self.build.next_batch()? {
            for row in batch {
                let k = self.build_key.eval(&row)?;
                if !k.is_null() {
                    st.index.entry(k.clone()).or_default().push(st.rows.len());
                    keys.push(k);
                }
                st.rows.push(row);
            }
        }
        st.matched = vec![false; st.rows.len()];
        st.built = true;
        if let Some(slot) = &self.slot {
            let c = self.summary_config;
            slot.borrow_mut().summary = Some(summarize_build(keys, c.budget, c.exact_threshold)?);
        }
        Ok(())
    }
}

impl Operator for HashJoinOp {
    fn next_batch(&mut self) -> Result<Option<Batch>> {
        if !self.state.built {
            self.build_side()?;
        }
        if !self.state.probe_done {
            if let Some(batch) = self.probe.next_batch()? {
                let st = &mut self.state;
                let mut out = Vec::new();
                for row in batch {
                    let k = self.probe_key.eval(&row)?;
                    if k.is_null() {
                        continue;
                    }
                    if let Some(matches) = st.index.get(&k) {
                        for &b in matches {
                            st.matched[b] = true;
                            let mut joined = st.rows[b].clone();
                            joined.extend(row.iter().cloned());
                            out.push(joined);
                        }
                    }
                }
                return Ok(Some(out));
            }
            self.state.probe_done = true;
        }
        if self.kind == JoinKind::LeftOuter && !self.state.finished {
            self.state.finished = true;
            let st = &self.state;
            let out = st
                .rows
                .iter()
                .zip(&st.matched)
                .filter(|(_, m)| !**m)
                .map(|(r, _)| {
                    let mut r = r.clone();
                    r.extend(std::iter::repeat_n(Value::Null, self.probe_width));
                    r
                })
                .collect();
            return Ok(Some(out));
        }
        Ok(None)
    }
}

#[derive(Debug, Clone)]
pub(crate) enum AggState {
    Count(i64),
    Sum(Option<Value>),
    Min(Option<Value>),
    Max(Option<Value>),
}

impl AggState {
    pub fn new(func: AggFunc) -> Self {
        match func {
            AggFunc::Count => AggState::Count(0),
            AggFunc::Sum => AggState::Sum(None),
            AggFunc::Min => AggState::Min(None),
            AggFunc::Max => AggState::Max(None),
        }
    }

    /// `v` is `None` for `COUNT(*)`.
    pub fn update(&mut self, v: Option<&Value>) -> Result<()> {
        match (self, v) {
            (AggState::Count(n), None) => *n += 1,
            (_, Some(Value::Null)) => {}
            (AggState::Count(n), Some(_)) => *n += 1,
            (AggState::Sum(acc), Some(v)) => {
                *acc = Some(match (acc.take(), v) {
                    (None, v) => v.clone(),
                    (Some(Value::Int(a)), Value::Int(b)) => {
                        Value::Int(a.checked_add(*b).ok_or(Error::Overflow("SUM"))?)
                    }
                    (Some(a), b) => {
                        let x = a.as_f64().ok_or_else(|| Error::Type("SUM over non-number".into()))?;
                        let y = b.as_f64().ok_or_else(|| Error::Type("SUM over non-number".into()))?;
                        Value::Float(x + y)
                    }
                });
            }
            (AggState::Min(acc), Some(v)) => {
                if acc.as_ref().is_none_or(|a| v.total_cmp(a).is_lt()) {
                    *acc = Some(v.clone());
                }
            }
            (AggState::Max(acc), Some(v)) => {
                if acc.as_ref().is_none_or(|a| v.total_cmp(a).is_gt()) {
                    *acc = Some(v.clone());
                }
            }
            (_, None) => return Err(Error::Type("aggregate needs an argument".into())),
        }
        Ok(())
    }

    pub fn finish(self) -> Value {
        match self {
            AggState::Count(n) => Value::Int(n),
            AggState::Sum(v) | AggState::Min(v) | AggState::Max(v) => v.unwrap_or(Value::Null),
        }
    }
}

/// Groups in first-appearance order.
#[derive(Default)]
pub(crate) struct Groups {
    slots: Vec<Option<(Row, Vec<AggState>)>>,
    index: HashMap<Row, usize>,
}

impl Groups {
    pub fn get_mut(&mut self, key: &Row) -> Option<&mut Vec<AggState>> {
        let slot = *self.index.get(key)?;
        self.slots[slot].as_mut().map(|(_, s)| s)
    }

    pub fn insert(&mut self, key: Row, states: Vec<AggState>) -> usize {
        let slot = self.slots.len();
        self.index.insert(key.clone(), slot);
        self.slots.push(Some((key, states)));
        slot
    }

    pub fn remove(&mut self, slot: usize) {
        if let Some((key, _)) = self.slots[slot].take() {
            self.index.remove(&key);
        }
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn into_rows(self) -> Vec<Row> {
        self.slots
            .into_iter()
            .flatten()
            .map(|(mut key, states)| {
                key.extend(states.into_iter().map(AggState::finish));
                key
            })
            .collect()
    }
}

/// Feeds one row into the groups; shared with the reference executor.
pub(crate) fn aggregate_row(
    groups: &mut Groups,
    key: Row,
    row: &[Value],
    aggs: &[(AggFunc, Option<BoundExpr>)],
) -> Result<()> {
    if groups.get_mut(&key).is_none() {
        groups.insert(key.clone(), aggs.iter().map(|(f, _)| AggState::new(*f)).collect());
    }
    update_states(groups.get_mut(&key).expect("group present"), row, aggs)
}

fn update_states(states: &mut [AggState], row: &[Value], aggs: &[(AggFunc, Option<BoundExpr>)]) -> Result<()> {
    for (state, (_, arg)) in states.iter_mut().zip(aggs) {
        match arg {
            Some(e) => state.update(Some(&e.eval(row)?))?,
            None => state.update(None)?,
        }
    }
    Ok(())
}

/// Output for an empty, key-less aggregation (`SELECT COUNT(*) ...`).
pub(crate) fn empty_aggregate_row(aggs: &[(AggFunc, Option<BoundExpr>)]) -> Row {
    aggs.iter().map(|(f, _)| AggState::new(*f).finish()).collect()
}

pub(crate) struct GroupHeap {
    pub key: usize,
    pub direction: Direction,
    pub k: usize,
    pub cell: Option<Arc<BoundaryCell>>,
}

struct RankedGroup {
    direction: Direction,
    value: Value,
    slot: usize,
}

impl PartialEq for RankedGroup {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other).is_eq()
    }
}
impl Eq for RankedGroup {}
impl PartialOrd for RankedGroup {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for RankedGroup {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        value_rank(self.direction, &self.value, &other.value).then(self.slot.cmp(&other.slot))
    }
}

pub(crate) struct GroupByOp {
    pub input: Box<dyn Operator>,
    pub keys: Vec<BoundExpr>,
    pub aggs: Vec<(AggFunc, Option<BoundExpr>)>,
    pub topk: Option<GroupHeap>,
    pub done: bool,
}

impl Operator for GroupByOp {
    fn next_batch(&mut self) -> Result<Option<Batch>> {
        if self.done {
            return Ok(None);
        }
        self.done = true;
        let mut groups = Groups::default();
        let mut ranked: BinaryHeap<RankedGroup> = BinaryHeap::new();
        while let Some(batch) = self.input.next_batch()? {
            for row in batch {
                let key: Row = self.keys.iter().map(|k| k.eval(&row)).collect::<Result<_>>()?;
                if let Some(states) = groups.get_mut(&key) {
                    update_states(states, &row, &self.aggs)?;
                    continue;
                }
                if let Some(h) = &self.topk {
                    let value = key[h.key].clone();
                    if ranked.len() >= h.k {
                        // a new group must strictly beat the worst admitted one
                        let beats = ranked
                            .peek()
                            .is_some_and(|w| value_rank(h.direction, &value, &w.value).is_lt());
                        if !beats {
                            continue;
                        }
                        let worst = ranked.pop().expect("non-empty");
                        groups.remove(worst.slot);
                    }
                    let states = self.aggs.iter().map(|(f, _)| AggState::new(*f)).collect();
                    let slot = groups.insert(key, states);
                    ranked.push(RankedGroup {
                        direction: h.direction,
                        value,
                        slot,
                    });
                    update_states(groups.get_mut(&row_key(&self.keys, &row)?).expect("inserted"), &row, &self.aggs)?;
                } else {
                    aggregate_row(&mut groups, key, &row, &self.aggs)?;
                }
            }
            if let Some(GroupHeap {
                k,
                cell: Some(cell),
                ..
            }) = &self.topk
            {
                if *k > 0 && ranked.len() >= *k {
                    let worst = ranked.peek().expect("full");
                    cell.tighten(Bound {
                        value: worst.value.clone(),
                        strict: true,
                    });
                }
            }
        }
        if groups.is_empty() && self.keys.is_empty() {
            return Ok(Some(vec![empty_aggregate_row(&self.aggs)]));
        }
        Ok(Some(groups.into_rows()))
    }
}

fn row_key(keys: &[BoundExpr], row: &[Value]) -> Result<Row> {
    keys.iter().map(|k| k.eval(row)).collect()
}

pub(crate) struct TopKOp {
    pub input: Box<dyn Operator>,
    pub order: BoundExpr,
    pub state: Option<TopKState>,
    pub cell: Option<Arc<BoundaryCell>>,
}

impl Operator for TopKOp {
    fn next_batch(&mut self) -> Result<Option<Batch>> {
        let Some(mut state) = self.state.take() else {
            return Ok(None);
        };
        let mut seq = 0;
        while let Some(batch) = self.input.next_batch()? {
            for (i, row) in batch.into_iter().enumerate() {
                let v = self.order.eval(&row)?;
                state.heap_insert(v, seq, i, row);
            }
            seq += 1;
            if let (Some(cell), Some(b)) = (&self.cell, state.bound()) {
                cell.tighten(b);
            }
        }
        Ok(Some(state.into_sorted().into_iter().map(|e| e.payload).collect()))
    }
}

pub(crate) struct LimitOp {
    pub input: Box<dyn Operator>,
    pub limit: usize,
    pub offset: usize,
    /// Stop pulling once the limit is met; otherwise drain the input.
    pub halting: bool,
    pub seen: usize,
    pub produced: usize,
    pub done: bool,
}

impl Operator for LimitOp {
    fn next_batch(&mut self) -> Result<Option<Batch>> {
        loop {
            if self.done || (self.halting && self.produced >= self.limit) {
                self.done = true;
                return Ok(None);
            }
            let Some(batch) = self.input.next_batch()? else {
                self.done = true;
                return Ok(None);
            };
            let mut out = Vec::new();
            for row in batch {
                self.seen += 1;
                if self.seen > self.offset && self.produced < self.limit {
                    out.push(row);
                    self.produced += 1;
                }
            }
            if !out.is_empty() {
                return Ok(Some(out));
            }
        }
    }
}
