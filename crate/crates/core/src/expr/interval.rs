//! Conservative evaluation over zone-map metadata.
//!
//! [`derive_interval`] bounds the value of a scalar expression over every
//! row consistent with the partition stats. Boolean expressions are handled
//! through [`Outcomes`]: the set of values (`TRUE`, `FALSE`, `NULL`) the
//! expression may take on some row. A partition is pruned when `TRUE` is
//! impossible and is fully matching when `TRUE` is the only possibility.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::eval::{cmp_holds, LikePattern};
use super::{ArithOp, CmpOp, Expr};
use crate::error::{Error, Result};
use crate::partition::StatsSource;
use crate::value::{cmp_f64, Value};

/// Metadata-level verdict for a predicate over one partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TriState {
    /// No row can satisfy the predicate ("not matching").
    AlwaysFalse,
    /// Some rows may satisfy it ("partially matching").
    Maybe,
    /// Every row satisfies it ("fully matching").
    AlwaysTrue,
}

impl TriState {
    pub fn and(self, other: TriState) -> TriState {
        use TriState::*;
        match (self, other) {
            (AlwaysFalse, _) | (_, AlwaysFalse) => AlwaysFalse,
            (AlwaysTrue, AlwaysTrue) => AlwaysTrue,
            _ => Maybe,
        }
    }

    pub fn or(self, other: TriState) -> TriState {
        use TriState::*;
        match (self, other) {
            (AlwaysTrue, _) | (_, AlwaysTrue) => AlwaysTrue,
            (AlwaysFalse, AlwaysFalse) => AlwaysFalse,
            _ => Maybe,
        }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(self) -> TriState {
        match self {
            TriState::AlwaysFalse => TriState::AlwaysTrue,
            TriState::Maybe => TriState::Maybe,
            TriState::AlwaysTrue => TriState::AlwaysFalse,
        }
    }

    /// Partition may contain qualifying rows.
    pub fn may_pass(self) -> bool {
        self != TriState::AlwaysFalse
    }
}

/// Possible results of a boolean expression over a partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Outcomes {
    pub t: bool,
    pub f: bool,
    pub n: bool,
}

impl Outcomes {
    pub const NULL: Outcomes = Outcomes {
        t: false,
        f: false,
        n: true,
    };

    pub fn tri_state(self) -> TriState {
        if !self.t {
            TriState::AlwaysFalse
        } else if !self.f && !self.n {
            TriState::AlwaysTrue
        } else {
            TriState::Maybe
        }
    }

    fn union(self, o: Outcomes) -> Outcomes {
        Outcomes {
            t: self.t || o.t,
            f: self.f || o.f,
            n: self.n || o.n,
        }
    }

    fn negate(self) -> Outcomes {
        Outcomes {
            t: self.f,
            f: self.t,
            n: self.n,
        }
    }
}

/// Range of values an expression may take; `None` bounds are unbounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: Option<Value>,
    pub hi: Option<Value>,
    /// Some row may evaluate to NULL.
    pub may_be_null: bool,
    /// Some row may evaluate to a non-null value. When false the expression
    /// is NULL on every row and the bounds are meaningless.
    pub has_values: bool,
}

impl Interval {
    pub fn point(v: Value) -> Interval {
        if v.is_null() {
            return Interval::null_only();
        }
        Interval {
            lo: Some(v.clone()),
            hi: Some(v),
            may_be_null: false,
            has_values: true,
        }
    }

    pub fn new(lo: Option<Value>, hi: Option<Value>, may_be_null: bool) -> Interval {
        Interval {
            lo,
            hi,
            may_be_null,
            has_values: true,
        }
    }

    pub fn unbounded(may_be_null: bool) -> Interval {
        Interval::new(None, None, may_be_null)
    }

    pub fn null_only() -> Interval {
        Interval {
            lo: None,
            hi: None,
            may_be_null: true,
            has_values: false,
        }
    }

    fn from_outcomes(o: Outcomes) -> Interval {
        if !o.t && !o.f {
            return Interval::null_only();
        }
        Interval::new(
            Some(Value::Bool(!o.f)),
            Some(Value::Bool(o.t)),
            o.n,
        )
    }

    fn outcomes(&self) -> Outcomes {
        if !self.has_values {
            return Outcomes::NULL;
        }
        let t = self.hi.as_ref().map_or(true, |v| *v == Value::Bool(true));
        let f = self.lo.as_ref().map_or(true, |v| *v == Value::Bool(false));
        Outcomes {
            t,
            f,
            n: self.may_be_null,
        }
    }

    /// Smallest interval containing both.
    pub fn hull(&self, other: &Interval) -> Interval {
        if !self.has_values {
            return Interval {
                may_be_null: true,
                ..other.clone()
            };
        }
        if !other.has_values {
            return Interval {
                may_be_null: true,
                ..self.clone()
            };
        }
        let lo = match (&self.lo, &other.lo) {
            (Some(a), Some(b)) => Some(a.min_of(b).clone()),
            _ => None,
        };
        let hi = match (&self.hi, &other.hi) {
            (Some(a), Some(b)) => Some(a.max_of(b).clone()),
            _ => None,
        };
        Interval::new(lo, hi, self.may_be_null || other.may_be_null)
    }

    /// Whether the (non-null part of the) interval contains `v`.
    pub fn contains(&self, v: &Value) -> Result<bool> {
        if !self.has_values || v.is_null() {
            return Ok(false);
        }
        let above = match &self.lo {
            Some(lo) => lo.try_cmp(v)? != Ordering::Greater,
            None => true,
        };
        let below = match &self.hi {
            Some(hi) => hi.try_cmp(v)? != Ordering::Less,
            None => true,
        };
        Ok(above && below)
    }
}

/// `a < b` where `None` on the left is -inf and on the right +inf.
fn lt_lo_hi(lo: &Option<Value>, hi: &Option<Value>) -> Result<bool> {
    match (lo, hi) {
        (Some(a), Some(b)) => Ok(a.try_cmp(b)? == Ordering::Less),
        _ => Ok(true),
    }
}

fn le_lo_hi(lo: &Option<Value>, hi: &Option<Value>) -> Result<bool> {
    match (lo, hi) {
        (Some(a), Some(b)) => Ok(a.try_cmp(b)? != Ordering::Greater),
        _ => Ok(true),
    }
}

fn single(i: &Interval) -> Option<&Value> {
    match (&i.lo, &i.hi) {
        (Some(a), Some(b)) if a.try_cmp(b).ok() == Some(Ordering::Equal) => Some(a),
        _ => None,
    }
}

fn cmp_outcomes(op: CmpOp, a: &Interval, b: &Interval) -> Result<Outcomes> {
    let n = a.may_be_null || b.may_be_null;
    if !a.has_values || !b.has_values {
        return Ok(Outcomes::NULL);
    }
    let can_lt = lt_lo_hi(&a.lo, &b.hi)?;
    let can_gt = lt_lo_hi(&b.lo, &a.hi)?;
    let can_eq = le_lo_hi(&a.lo, &b.hi)? && le_lo_hi(&b.lo, &a.hi)?;
    // all values equal: both are the same single point
    let must_eq = match (single(a), single(b)) {
        (Some(x), Some(y)) => x.try_cmp(y)? == Ordering::Equal,
        _ => false,
    };
    let possible = |ord: Ordering| match ord {
        Ordering::Less => can_lt,
        Ordering::Equal => can_eq,
        Ordering::Greater => can_gt,
    };
    let mut t = false;
    let mut f = false;
    for ord in [Ordering::Less, Ordering::Equal, Ordering::Greater] {
        if possible(ord) {
            if cmp_holds(op, ord) {
                t = true;
            } else {
                f = true;
            }
        }
    }
    if must_eq {
        t = cmp_holds(op, Ordering::Equal);
        f = !t;
    }
    Ok(Outcomes { t, f, n })
}

/// Byte string just above every string with prefix `p`; `None` if no such
/// bound exists (prefix of only 0xFF bytes).
fn prefix_successor(p: &[u8]) -> Option<Vec<u8>> {
    let mut s = p.to_vec();
    while let Some(last) = s.pop() {
        if last < 0xFF {
            s.push(last + 1);
            return Some(s);
        }
    }
    None
}

fn bytes(v: &Value) -> Result<&[u8]> {
    v.as_str()
        .map(str::as_bytes)
        .ok_or_else(|| Error::Type(format!("string pattern applied to {v}")))
}

/// Outcomes of "value starts with `prefix`" over a string interval.
fn prefix_outcomes(i: &Interval, prefix: &str, exact_equivalent: bool) -> Result<Outcomes> {
    if !i.has_values {
        return Ok(Outcomes::NULL);
    }
    let p = prefix.as_bytes();
    let succ = prefix_successor(p);
    // some value in [lo, hi] lies in [p, succ)
    let hi_ok = match &i.hi {
        Some(hi) => bytes(hi)? >= p,
        None => true,
    };
    let lo_ok = match (&i.lo, &succ) {
        (Some(lo), Some(s)) => bytes(lo)? < s.as_slice(),
        _ => true,
    };
    let t = hi_ok && lo_ok;
    // [lo, hi] entirely inside [p, succ): both ends carry the prefix
    let inside = match (&i.lo, &i.hi) {
        (Some(lo), Some(hi)) => bytes(lo)?.starts_with(p) && bytes(hi)?.starts_with(p),
        _ => p.is_empty(),
    };
    // a general pattern may still reject values that carry the prefix
    let f = !inside || !exact_equivalent;
    Ok(Outcomes {
        t,
        f,
        n: i.may_be_null,
    })
}

#[derive(Clone, Copy)]
enum Num {
    I(i128),
    F(f64),
}

fn to_num(v: &Value) -> Result<Num> {
    match v {
        Value::Int(i) => Ok(Num::I(*i as i128)),
        Value::Float(f) => Ok(Num::F(*f)),
        _ => Err(Error::Type(format!("arithmetic on non-numeric {v}"))),
    }
}

fn num_f64(n: Num) -> f64 {
    match n {
        Num::I(i) => i as f64,
        Num::F(f) => f,
    }
}

fn arith_interval(op: ArithOp, a: &Interval, b: &Interval) -> Result<Interval> {
    if !a.has_values || !b.has_values {
        return Ok(Interval::null_only());
    }
    let may_be_null = a.may_be_null || b.may_be_null;
    let bounds = |i: &Interval| -> Result<Option<(Num, Num)>> {
        match (&i.lo, &i.hi) {
            (Some(lo), Some(hi)) => Ok(Some((to_num(lo)?, to_num(hi)?))),
            _ => Ok(None),
        }
    };
    let (Some((alo, ahi)), Some((blo, bhi))) = (bounds(a)?, bounds(b)?) else {
        return Ok(Interval::unbounded(may_be_null || op == ArithOp::Div));
    };
    let all_int = matches!((alo, ahi, blo, bhi), (Num::I(_), Num::I(_), Num::I(_), Num::I(_)));

    if op == ArithOp::Div {
        let (dlo, dhi) = (num_f64(blo), num_f64(bhi));
        if dlo.is_nan() || dhi.is_nan() || (dlo <= 0.0 && dhi >= 0.0) {
            return Ok(Interval::unbounded(true));
        }
    }

    if all_int && op != ArithOp::Div {
        let (Num::I(alo), Num::I(ahi), Num::I(blo), Num::I(bhi)) = (alo, ahi, blo, bhi) else {
            unreachable!()
        };
        let cands: Vec<i128> = match op {
            ArithOp::Add => vec![alo + blo, ahi + bhi],
            ArithOp::Sub => vec![alo - bhi, ahi - blo],
            ArithOp::Mul => vec![alo * blo, alo * bhi, ahi * blo, ahi * bhi],
            ArithOp::Div => unreachable!(),
        };
        // rows whose result overflows i64 raise an error, so clamp
        let clamp = |x: i128| x.clamp(i64::MIN as i128, i64::MAX as i128) as i64;
        let lo = clamp(*cands.iter().min().unwrap());
        let hi = clamp(*cands.iter().max().unwrap());
        return Ok(Interval::new(
            Some(Value::Int(lo)),
            Some(Value::Int(hi)),
            may_be_null,
        ));
    }

    let (alo, ahi, blo, bhi) = (num_f64(alo), num_f64(ahi), num_f64(blo), num_f64(bhi));
    if [alo, ahi, blo, bhi].iter().any(|x| !x.is_finite()) {
        // inf - inf or inf * 0 could produce NaN on some row
        return Ok(Interval::unbounded(may_be_null || op == ArithOp::Div));
    }
    let cands: Vec<f64> = match op {
        ArithOp::Add => vec![alo + blo, ahi + bhi],
        ArithOp::Sub => vec![alo - bhi, ahi - blo],
        ArithOp::Mul => vec![alo * blo, alo * bhi, ahi * blo, ahi * bhi],
        ArithOp::Div => vec![alo / blo, alo / bhi, ahi / blo, ahi / bhi],
    };
    if cands.iter().any(|x| x.is_nan()) {
        return Ok(Interval::unbounded(may_be_null));
    }
    let lo = cands.iter().copied().min_by(|x, y| cmp_f64(*x, *y)).unwrap();
    let hi = cands.iter().copied().max_by(|x, y| cmp_f64(*x, *y)).unwrap();
    Ok(Interval::new(
        Some(Value::Float(lo)),
        Some(Value::Float(hi)),
        may_be_null,
    ))
}

/// Sound bounds of `expr` over every row consistent with `stats`.
pub fn derive_interval(expr: &Expr, stats: &dyn StatsSource) -> Result<Interval> {
    match expr {
        Expr::Column { name } => {
            let s = stats
                .column_stats(name)
                .ok_or_else(|| Error::Bind(format!("no stats for column '{name}'")))?;
            if s.min.is_none() || s.max.is_none() {
                return Ok(Interval::null_only());
            }
            Ok(Interval::new(s.min.clone(), s.max.clone(), s.null_count > 0))
        }
        Expr::Literal { value } => Ok(Interval::point(value.clone())),
        Expr::Arith { fun, lhs, rhs } => {
            arith_interval(*fun, &derive_interval(lhs, stats)?, &derive_interval(rhs, stats)?)
        }
        Expr::If {
            cond,
            then,
            otherwise,
        } => {
            let c = outcomes(cond, stats)?;
            if c.t && !c.f && !c.n {
                derive_interval(then, stats)
            } else if !c.t {
                derive_interval(otherwise, stats)
            } else {
                Ok(derive_interval(then, stats)?.hull(&derive_interval(otherwise, stats)?))
            }
        }
        _ => Ok(Interval::from_outcomes(outcomes(expr, stats)?)),
    }
}

/// Possible boolean results of `expr` over rows consistent with `stats`.
pub fn outcomes(expr: &Expr, stats: &dyn StatsSource) -> Result<Outcomes> {
    match expr {
        Expr::Column { .. } | Expr::Literal { .. } => {
            Ok(derive_interval(expr, stats)?.outcomes())
        }
        Expr::Arith { .. } => Err(Error::Type(format!("{expr} is not boolean"))),
        Expr::Cmp { cmp, lhs, rhs } => cmp_outcomes(
            *cmp,
            &derive_interval(lhs, stats)?,
            &derive_interval(rhs, stats)?,
        ),
        Expr::And { children } => {
            let kids = children
                .iter()
                .map(|c| outcomes(c, stats))
                .collect::<Result<Vec<_>>>()?;
            Ok(Outcomes {
                t: kids.iter().all(|o| o.t),
                f: kids.iter().any(|o| o.f),
                n: kids.iter().all(|o| o.t || o.n) && kids.iter().any(|o| o.n),
            })
        }
        Expr::Or { children } => {
            let kids = children
                .iter()
                .map(|c| outcomes(c, stats))
                .collect::<Result<Vec<_>>>()?;
            Ok(Outcomes {
                t: kids.iter().any(|o| o.t),
                f: kids.iter().all(|o| o.f),
                n: kids.iter().all(|o| o.f || o.n) && kids.iter().any(|o| o.n),
            })
        }
        Expr::Not { child } => Ok(outcomes(child, stats)?.negate()),
        Expr::If {
            cond,
            then,
            otherwise,
        } => {
            let c = outcomes(cond, stats)?;
            if c.t && !c.f && !c.n {
                outcomes(then, stats)
            } else if !c.t {
                outcomes(otherwise, stats)
            } else {
                Ok(outcomes(then, stats)?.union(outcomes(otherwise, stats)?))
            }
        }
        Expr::Like { child, pattern } => {
            let i = derive_interval(child, stats)?;
            match LikePattern::parse(pattern)? {
                LikePattern::Exact(s) => cmp_outcomes(CmpOp::Eq, &i, &Interval::point(Value::Str(s))),
                LikePattern::Prefix(p) => prefix_outcomes(&i, &p, true),
                LikePattern::General { prefix, .. } => prefix_outcomes(&i, &prefix, false),
            }
        }
        Expr::StartsWith { child, prefix } => {
            prefix_outcomes(&derive_interval(child, stats)?, prefix, true)
        }
        Expr::IsNull { child } => {
            let i = derive_interval(child, stats)?;
            Ok(Outcomes {
                t: i.may_be_null,
                f: i.has_values,
                n: false,
            })
        }
        Expr::InList { child, list } => {
            let i = derive_interval(child, stats)?;
            if !i.has_values {
                return Ok(Outcomes::NULL);
            }
            let mut t = false;
            for v in list {
                t |= i.contains(v)?;
            }
            let f = match single(&i) {
                Some(x) => {
                    let mut hit = false;
                    for v in list {
                        hit |= x.try_cmp(v)? == Ordering::Equal;
                    }
                    !hit
                }
                None => true,
            };
            Ok(Outcomes {
                t,
                f: f || !t,
                n: i.may_be_null,
            })
        }
    }
}

/// Classifies a partition for `predicate`: not / partially / fully matching.
pub fn eval_meta(predicate: &Expr, stats: &dyn StatsSource) -> Result<TriState> {
    Ok(outcomes(predicate, stats)?.tri_state())
}

/// Same classification computed as two pruning passes: the predicate
/// itself, then its negation. A partition is fully matching when the
/// negated predicate cannot be true (or null) on any row.
pub fn eval_meta_two_pass(predicate: &Expr, stats: &dyn StatsSource) -> Result<TriState> {
    let first = outcomes(predicate, stats)?;
    if !first.t {
        return Ok(TriState::AlwaysFalse);
    }
    let inverted = outcomes(&super::negate(predicate), stats)?;
    Ok(if !inverted.t && !inverted.n {
        TriState::AlwaysTrue
    } else {
        TriState::Maybe
    })
}
