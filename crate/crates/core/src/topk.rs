//! Top-k heap with a monotone boundary, partition skip tests, scan ordering
//! and boundary initialization from fully-matching partitions.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::expr::Interval;
use crate::partition::{ColumnStats, Row};
use crate::plan::Direction;
use crate::value::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanOrderStrategy {
    /// Seeded shuffle.
    NoneRandom,
    /// By partition max (descending order) or min (ascending order).
    #[default]
    FullSort,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeapEntry {
    pub value: Value,
    pub partition_id: usize,
    pub row_index: usize,
    pub payload: Row,
}

/// `Less` when `a` ranks ahead of `b`. Nulls rank last in both directions;
/// equal values fall back to (partition id, row index).
pub fn rank_cmp(direction: Direction, a: &HeapEntry, b: &HeapEntry) -> Ordering {
    value_rank(direction, &a.value, &b.value)
        .then(a.partition_id.cmp(&b.partition_id))
        .then(a.row_index.cmp(&b.row_index))
}

/// `Less` when value `a` ranks ahead of `b` (nulls last).
pub fn value_rank(direction: Direction, a: &Value, b: &Value) -> Ordering {
    match (a.is_null(), b.is_null()) {
        (true, true) => Ordering::Equal,
        (true, false) => Ordering::Greater,
        (false, true) => Ordering::Less,
        _ => {
            let o = a.total_cmp(b);
            match direction {
                Direction::Desc => o.reverse(),
                Direction::Asc => o,
            }
        }
    }
}

struct Ranked {
    direction: Direction,
    entry: HeapEntry,
}

impl PartialEq for Ranked {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Ranked {}
impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Ranked {
    // worst entry sits on top of the max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        rank_cmp(self.direction, &self.entry, &other.entry)
    }
}

/// Bounded heap keeping the best `k` entries.
///
/// A full heap only admits a value that strictly beats its boundary, so
/// ties never displace. An optional floor (an initialized boundary) rejects
/// values ranking behind it.
pub struct TopKState {
    k: usize,
    direction: Direction,
    heap: BinaryHeap<Ranked>,
    floor: Option<Value>,
}

impl TopKState {
    pub fn new(k: usize, direction: Direction) -> Self {
        TopKState {
            k,
            direction,
            heap: BinaryHeap::with_capacity(k.min(1 << 16) + 1),
            floor: None,
        }
    }

    pub fn with_floor(mut self, floor: Option<Value>) -> Self {
        self.floor = floor;
        self
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.heap.len() >= self.k
    }

    /// The k-th best value, present once the heap holds `k` entries.
    pub fn boundary(&self) -> Option<&Value> {
        if self.is_full() {
            self.heap.peek().map(|r| &r.entry.value)
        } else {
            None
        }
    }

    pub fn floor(&self) -> Option<&Value> {
        self.floor.as_ref()
    }

    /// Current pruning bound: the heap boundary once full, else the floor.
    pub fn bound(&self) -> Option<Bound> {
        match (self.boundary(), &self.floor) {
            (Some(b), _) => Some(Bound {
                value: b.clone(),
                strict: false,
            }),
            (None, Some(f)) => Some(Bound {
                value: f.clone(),
                strict: true,
            }),
            (None, None) => None,
        }
    }

    /// Offers a row; returns whether it entered the heap.
    pub fn heap_insert(&mut self, value: Value, partition_id: usize, row_index: usize, payload: Row) -> bool {
        if self.k == 0 {
            return false;
        }
        if let Some(f) = &self.floor {
            if value_rank(self.direction, &value, f) == Ordering::Greater {
                return false;
            }
        }
        let entry = HeapEntry {
            value,
            partition_id,
            row_index,
            payload,
        };
        if self.is_full() {
            let worst = &self.heap.peek().expect("full heap").entry.value;
            if value_rank(self.direction, &entry.value, worst) != Ordering::Less {
                return false;
            }
            self.heap.pop();
        }
        self.heap.push(Ranked {
            direction: self.direction,
            entry,
        });
        true
    }

    /// Entries best first.
    pub fn into_sorted(self) -> Vec<HeapEntry> {
        let mut v: Vec<HeapEntry> = self.heap.into_iter().map(|r| r.entry).collect();
        let d = self.direction;
        v.sort_by(|a, b| rank_cmp(d, a, b));
        v
    }
}

/// A pruning bound. Non-strict bounds come from a full strict-replacement
/// heap and also exclude ties; strict ones (initialized floors) keep them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    pub value: Value,
    pub strict: bool,
}

impl Bound {
    /// Whether `self` prunes at least everything `other` prunes.
    fn at_least_as_tight(&self, other: &Bound, direction: Direction) -> bool {
        match value_rank(direction, &self.value, &other.value) {
            Ordering::Less => true,
            Ordering::Greater => false,
            Ordering::Equal => !self.strict || other.strict,
        }
    }
}

/// Whether a partition with these order-column stats can be skipped given a
/// full heap with `boundary`.
///
/// Descending: prune iff `max <= boundary` or the column is all null.
/// Ascending mirrors on `min`.
pub fn should_prune(stats: &ColumnStats, boundary: &Value, direction: Direction) -> bool {
    prune_with(stats, &Bound { value: boundary.clone(), strict: false }, direction)
}

/// [`should_prune`] for either kind of bound.
pub fn prune_with(stats: &ColumnStats, bound: &Bound, direction: Direction) -> bool {
    let best = match direction {
        Direction::Desc => stats.max.as_ref(),
        Direction::Asc => stats.min.as_ref(),
    };
    match best {
        // only nulls, which never beat a bound
        None => true,
        Some(b) => beats_bound(b, bound, direction),
    }
}

/// Same test on a derived value range of the order expression. An
/// unbounded end can never be pruned.
pub fn interval_prunable(interval: &Interval, bound: &Bound, direction: Direction) -> bool {
    if !interval.has_values {
        return true;
    }
    let best = match direction {
        Direction::Desc => interval.hi.as_ref(),
        Direction::Asc => interval.lo.as_ref(),
    };
    best.is_some_and(|b| beats_bound(b, bound, direction))
}

// true when no value ranking at or behind `best` can enter the heap
fn beats_bound(best: &Value, bound: &Bound, direction: Direction) -> bool {
    if bound.value.is_null() {
        return false;
    }
    match value_rank(direction, best, &bound.value) {
        Ordering::Less => false,
        Ordering::Equal => !bound.strict,
        Ordering::Greater => true,
    }
}

/// Shared, monotonically tightening pruning bound.
#[derive(Debug)]
pub struct BoundaryCell {
    direction: Direction,
    inner: Mutex<Option<Bound>>,
}

impl BoundaryCell {
    pub fn new(direction: Direction, initial: Option<Bound>) -> Self {
        BoundaryCell {
            direction,
            inner: Mutex::new(initial),
        }
    }

    pub fn get(&self) -> Option<Bound> {
        self.inner.lock().expect("boundary lock").clone()
    }

    /// Installs `candidate` if it is tighter; looser values are ignored.
    pub fn tighten(&self, candidate: Bound) -> bool {
        let mut cur = self.inner.lock().expect("boundary lock");
        let replace = match cur.as_ref() {
            None => true,
            Some(c) => candidate.at_least_as_tight(c, self.direction) && candidate != *c,
        };
        if replace {
            *cur = Some(candidate);
        }
        replace
    }

    pub fn should_prune(&self, stats: &ColumnStats) -> bool {
        self.get()
            .is_some_and(|b| prune_with(stats, &b, self.direction))
    }

    pub fn should_prune_interval(&self, interval: &Interval) -> bool {
        self.get()
            .is_some_and(|b| interval_prunable(interval, &b, self.direction))
    }
}

/// Visit order for a top-k scan. Partitions whose order column is entirely
/// null go last, by id.
pub fn order_scan_set(
    partitions: &[(usize, &ColumnStats)],
    direction: Direction,
    strategy: ScanOrderStrategy,
    seed: u64,
) -> Vec<usize> {
    let intervals: Vec<(usize, Interval)> = partitions
        .iter()
        .map(|(id, s)| {
            let iv = match (&s.min, &s.max) {
                (Some(lo), Some(hi)) => {
                    Interval::new(Some(lo.clone()), Some(hi.clone()), s.null_count > 0)
                }
                _ => Interval::null_only(),
            };
            (*id, iv)
        })
        .collect();
    order_by_intervals(&intervals, direction, strategy, seed)
}

/// [`order_scan_set`] over derived ranges of the order expression.
/// Partitions with an unbounded best end come first.
pub fn order_by_intervals(
    partitions: &[(usize, Interval)],
    direction: Direction,
    strategy: ScanOrderStrategy,
    seed: u64,
) -> Vec<usize> {
    let key = |iv: &Interval| -> Option<Option<Value>> {
        if !iv.has_values {
            return None;
        }
        Some(match direction {
            Direction::Desc => iv.hi.clone(),
            Direction::Asc => iv.lo.clone(),
        })
    };
    let (mut valued, nulls): (Vec<_>, Vec<_>) = partitions
        .iter()
        .map(|(id, iv)| (*id, key(iv)))
        .partition(|(_, k)| k.is_some());
    match strategy {
        ScanOrderStrategy::FullSort => valued.sort_by(|a, b| {
            let (ka, kb) = (a.1.as_ref().unwrap(), b.1.as_ref().unwrap());
            let o = match (ka, kb) {
                (None, None) => Ordering::Equal,
                (None, Some(_)) => Ordering::Less,
                (Some(_), None) => Ordering::Greater,
                (Some(x), Some(y)) => value_rank(direction, x, y),
            };
            o.then(a.0.cmp(&b.0))
        }),
        ScanOrderStrategy::NoneRandom => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            valued.shuffle(&mut rng);
        }
    }
    valued.into_iter().chain(nulls).map(|(id, _)| id).collect()
}

/// Initial boundary from the order-column stats of fully-matching
/// partitions, before any row is read.
///
/// For descending order, candidate A is the k-th largest partition max
/// (absent with fewer than k partitions) and candidate B is the min of the
/// partition at which the row count, accumulated in descending-min order,
/// first reaches k. The tighter present candidate wins. Partitions
/// containing nulls are ignored. Ascending mirrors.
pub fn init_boundary(full_match: &[ColumnStats], k: usize, direction: Direction) -> Option<Value> {
    if k == 0 {
        return None;
    }
    let parts: Vec<(&Value, &Value, usize)> = full_match
        .iter()
        .filter(|s| s.null_count == 0 && s.row_count > 0)
        .filter_map(|s| Some((s.min.as_ref()?, s.max.as_ref()?, s.row_count)))
        .collect();
    // "best" end and "worst" end of each partition in ranking terms
    let (best, worst): (Vec<&Value>, Vec<(&Value, usize)>) = parts
        .iter()
        .map(|&(lo, hi, n)| match direction {
            Direction::Desc => (hi, (lo, n)),
            Direction::Asc => (lo, (hi, n)),
        })
        .unzip();
    let rank = |a: &&Value, b: &&Value| value_rank(direction, a, b);

    let cand_a = if best.len() >= k {
        let mut b = best.clone();
        b.sort_by(rank);
        Some(b[k - 1])
    } else {
        None
    };
    let mut w = worst;
    w.sort_by(|a, b| rank(&a.0, &b.0));
    let mut cum = 0;
    let mut cand_b = None;
    for (v, n) in w {
        cum += n;
        if cum >= k {
            cand_b = Some(v);
            break;
        }
    }
    match (cand_a, cand_b) {
        (Some(a), Some(b)) => Some(if rank(&a, &b) == Ordering::Greater { b } else { a }.clone()),
        (a, b) => a.or(b).cloned(),
    }
}

fn bare(name: &str) -> &str {
    name.rsplit('.').next().unwrap_or(name)
}

fn same_column(a: &str, b: &str) -> bool {
    a == b || ((!a.contains('.') || !b.contains('.')) && bare(a) == bare(b))
}

/// Whether top-k pruning may run below an aggregation: every order key
/// must be a group key.
pub fn groupby_topk_eligible<S: AsRef<str>, T: AsRef<str>>(order_keys: &[S], group_keys: &[T]) -> bool {
    order_keys
        .iter()
        .all(|o| group_keys.iter().any(|g| same_column(o.as_ref(), g.as_ref())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn drain_values(s: TopKState) -> Vec<i64> {
        s.into_sorted()
            .into_iter()
            .map(|e| match e.value {
                Value::Int(i) => i,
                _ => unreachable!(),
            })
            .collect()
    }

    #[test]
    fn heap_examples() {
        let mut h = TopKState::new(3, Direction::Desc);
        for (i, v) in [101, 76, 83].into_iter().enumerate() {
            assert!(h.heap_insert(Value::Int(v), 3, i, vec![]));
        }
        assert_eq!(h.boundary(), Some(&Value::Int(76)));
        assert!(h.heap_insert(Value::Int(97), 4, 2, vec![]));
        assert_eq!(h.boundary(), Some(&Value::Int(83)));
        assert!(!h.heap_insert(Value::Int(83), 4, 5, vec![]));
        assert_eq!(drain_values(h), vec![101, 97, 83]);
    }

    #[test]
    fn ascending_and_nulls() {
        let mut h = TopKState::new(2, Direction::Asc);
        h.heap_insert(Value::Null, 1, 0, vec![]);
        h.heap_insert(Value::Int(5), 1, 1, vec![]);
        assert_eq!(h.boundary(), Some(&Value::Null));
        assert!(h.heap_insert(Value::Int(9), 1, 2, vec![]));
        assert!(!h.heap_insert(Value::Null, 1, 3, vec![]));
        assert_eq!(drain_values(h), vec![5, 9]);
    }

    #[test]
    fn floor_rejects_worse_rows() {
        let mut h = TopKState::new(3, Direction::Desc).with_floor(Some(Value::Int(76)));
        assert!(!h.heap_insert(Value::Int(71), 2, 0, vec![]));
        assert!(h.heap_insert(Value::Int(76), 3, 1, vec![]));
        assert_eq!(h.bound().unwrap(), Bound { value: Value::Int(76), strict: true });
    }

    #[test]
    fn prune_examples() {
        let s = |lo: i64, hi: i64| ColumnStats::range(lo, hi, 3);
        let b = Value::Int(80);
        assert!(should_prune(&s(0, 70), &b, Direction::Desc));
        assert!(should_prune(&s(0, 80), &b, Direction::Desc));
        assert!(!should_prune(&s(0, 101), &b, Direction::Desc));
        assert!(should_prune(&s(80, 90), &b, Direction::Asc));
        assert!(!should_prune(&s(79, 90), &b, Direction::Asc));
        assert!(should_prune(&ColumnStats::new(None, None, 3, 3), &b, Direction::Desc));
        let floor = Bound { value: Value::Int(80), strict: true };
        assert!(!prune_with(&s(0, 80), &floor, Direction::Desc));
        assert!(prune_with(&s(0, 79), &floor, Direction::Desc));
    }

    #[test]
    fn boundary_cell_only_tightens() {
        let c = BoundaryCell::new(Direction::Desc, None);
        let b = |v: i64, strict| Bound { value: Value::Int(v), strict };
        assert!(c.tighten(b(50, true)));
        assert!(c.tighten(b(50, false)));
        assert!(!c.tighten(b(50, true)));
        assert!(!c.tighten(b(40, false)));
        assert!(c.tighten(b(60, true)));
        assert_eq!(c.get(), Some(b(60, true)));
    }

    #[test]
    fn scan_order_examples() {
        let st = [ColumnStats::range(0, 50, 1), ColumnStats::range(0, 101, 1), ColumnStats::range(0, 90, 1)];
        let parts: Vec<_> = st.iter().enumerate().map(|(i, s)| (i + 1, s)).collect();
        assert_eq!(order_scan_set(&parts, Direction::Desc, ScanOrderStrategy::FullSort, 0), vec![2, 3, 1]);
        let st = [ColumnStats::range(10, 20, 1), ColumnStats::range(5, 20, 1), ColumnStats::new(None, None, 2, 2)];
        let parts: Vec<_> = st.iter().enumerate().map(|(i, s)| (i + 1, s)).collect();
        assert_eq!(order_scan_set(&parts, Direction::Asc, ScanOrderStrategy::FullSort, 0), vec![2, 1, 3]);
        let a = order_scan_set(&parts, Direction::Asc, ScanOrderStrategy::NoneRandom, 7);
        assert_eq!(a, order_scan_set(&parts, Direction::Asc, ScanOrderStrategy::NoneRandom, 7));
        assert_eq!(a[2], 3);
    }

    #[test]
    fn init_boundary_examples() {
        let parts = [
            ColumnStats::range(80, 101, 3),
            ColumnStats::range(60, 90, 3),
            ColumnStats::range(10, 50, 3),
        ];
        assert_eq!(init_boundary(&parts, 3, Direction::Desc), Some(Value::Int(80)));
        assert_eq!(init_boundary(&parts, 10, Direction::Desc), None);
        assert_eq!(init_boundary(&parts[..1], 2, Direction::Desc), Some(Value::Int(80)));
        // sightings partition 3
        let p3 = [ColumnStats::range(76, 101, 3)];
        assert_eq!(init_boundary(&p3, 3, Direction::Desc), Some(Value::Int(76)));
        // ascending: candidate A is 60, candidate B is 50
        assert_eq!(init_boundary(&parts, 2, Direction::Asc), Some(Value::Int(50)));
        // partitions with nulls do not count
        let nully = [ColumnStats::new(Some(Value::Int(1)), Some(Value::Int(9)), 3, 1)];
        assert_eq!(init_boundary(&nully, 1, Direction::Desc), None);
    }

    #[test]
    fn groupby_eligibility() {
        assert!(groupby_topk_eligible(&["a"], &["a", "b"]));
        assert!(!groupby_topk_eligible(&["sum_x"], &["a", "b"]));
        assert!(groupby_topk_eligible::<&str, &str>(&[], &["a"]));
        assert!(groupby_topk_eligible(&["t.a"], &["a"]));
    }
}
