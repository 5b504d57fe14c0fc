use std::cmp::Ordering;

use super::{ArithOp, CmpOp, Expr};
use crate::error::{Error, Result};
use crate::partition::Schema;
use crate::value::Value;

/// Compiled LIKE pattern. `%` matches any run of characters and `_` exactly
/// one character; there is no escape character.
#[derive(Debug, Clone, PartialEq)]
pub enum LikePattern {
    /// No wildcards.
    Exact(String),
    /// `prefix%` with no other wildcard.
    Prefix(String),
    /// Anything else. `prefix` is the literal text before the first wildcard.
    General { prefix: String, tokens: Vec<LikeToken> },
}

#[derive(Debug, Clone, PartialEq)]
pub enum LikeToken {
    Literal(char),
    One,
    Any,
}

impl LikePattern {
    pub fn parse(pattern: &str) -> Result<LikePattern> {
        let tokens: Vec<LikeToken> = pattern
            .chars()
            .map(|c| match c {
                '%' => LikeToken::Any,
                '_' => LikeToken::One,
                c => LikeToken::Literal(c),
            })
            .collect();
        let first_wild = tokens
            .iter()
            .position(|t| !matches!(t, LikeToken::Literal(_)));
        let prefix: String = pattern.chars().take(first_wild.unwrap_or(usize::MAX)).collect();
        Ok(match first_wild {
            None => LikePattern::Exact(prefix),
            Some(i) if i + 1 == tokens.len() && tokens[i] == LikeToken::Any => {
                LikePattern::Prefix(prefix)
            }
            Some(_) => LikePattern::General { prefix, tokens },
        })
    }

    /// Literal prefix every match must start with.
    pub fn prefix(&self) -> &str {
        match self {
            LikePattern::Exact(p) | LikePattern::Prefix(p) => p,
            LikePattern::General { prefix, .. } => prefix,
        }
    }

    pub fn matches(&self, s: &str) -> bool {
        match self {
            LikePattern::Exact(p) => s == p,
            LikePattern::Prefix(p) => s.starts_with(p.as_str()),
            LikePattern::General { tokens, .. } => {
                let chars: Vec<char> = s.chars().collect();
                glob_match(tokens, &chars)
            }
        }
    }
}

fn glob_match(tokens: &[LikeToken], s: &[char]) -> bool {
    // reachable[j]: tokens consumed so far can match s[..j]
    let mut reachable = vec![false; s.len() + 1];
    reachable[0] = true;
    for t in tokens {
        let mut next = vec![false; s.len() + 1];
        match t {
            LikeToken::Any => {
                let mut any = false;
                for j in 0..=s.len() {
                    any |= reachable[j];
                    next[j] = any;
                }
            }
            LikeToken::One => {
                for j in 0..s.len() {
                    next[j + 1] = reachable[j];
                }
            }
            LikeToken::Literal(c) => {
                for j in 0..s.len() {
                    next[j + 1] = reachable[j] && s[j] == *c;
                }
            }
        }
        reachable = next;
    }
    reachable[s.len()]
}

/// Expression with column references resolved to row positions.
#[derive(Debug, Clone)]
pub enum BoundExpr {
    Column(usize),
    Literal(Value),
    Arith(ArithOp, Box<BoundExpr>, Box<BoundExpr>),
    Cmp(CmpOp, Box<BoundExpr>, Box<BoundExpr>),
    And(Vec<BoundExpr>),
    Or(Vec<BoundExpr>),
    Not(Box<BoundExpr>),
    If(Box<BoundExpr>, Box<BoundExpr>, Box<BoundExpr>),
    Like(Box<BoundExpr>, LikePattern),
    StartsWith(Box<BoundExpr>, String),
    IsNull(Box<BoundExpr>),
    InList(Box<BoundExpr>, Vec<Value>),
}

impl BoundExpr {
    /// Type-checks `expr` against `schema` and resolves its columns.
    pub fn bind(expr: &Expr, schema: &Schema) -> Result<BoundExpr> {
        expr.data_type(schema)?;
        Self::bind_unchecked(expr, schema)
    }

    fn bind_unchecked(expr: &Expr, schema: &Schema) -> Result<BoundExpr> {
        let b = |e: &Expr| Self::bind_unchecked(e, schema).map(Box::new);
        Ok(match expr {
            Expr::Column { name } => BoundExpr::Column(schema.resolve(name)?),
            Expr::Literal { value } => BoundExpr::Literal(value.clone()),
            Expr::Arith { fun, lhs, rhs } => BoundExpr::Arith(*fun, b(lhs)?, b(rhs)?),
            Expr::Cmp { cmp, lhs, rhs } => BoundExpr::Cmp(*cmp, b(lhs)?, b(rhs)?),
            Expr::And { children } => BoundExpr::And(
                children
                    .iter()
                    .map(|c| Self::bind_unchecked(c, schema))
                    .collect::<Result<_>>()?,
            ),
            Expr::Or { children } => BoundExpr::Or(
                children
                    .iter()
                    .map(|c| Self::bind_unchecked(c, schema))
                    .collect::<Result<_>>()?,
            ),
            Expr::Not { child } => BoundExpr::Not(b(child)?),
            Expr::If {
                cond,
                then,
                otherwise,
            } => BoundExpr::If(b(cond)?, b(then)?, b(otherwise)?),
            Expr::Like { child, pattern } => {
                BoundExpr::Like(b(child)?, LikePattern::parse(pattern)?)
            }
            Expr::StartsWith { child, prefix } => BoundExpr::StartsWith(b(child)?, prefix.clone()),
            Expr::IsNull { child } => BoundExpr::IsNull(b(child)?),
            Expr::InList { child, list } => BoundExpr::InList(b(child)?, list.clone()),
        })
    }

    pub fn eval(&self, row: &[Value]) -> Result<Value> {
        Ok(match self {
            BoundExpr::Column(i) => row[*i].clone(),
            BoundExpr::Literal(v) => v.clone(),
            BoundExpr::Arith(op, l, r) => arith(*op, &l.eval(row)?, &r.eval(row)?)?,
            BoundExpr::Cmp(op, l, r) => {
                let (a, b) = (l.eval(row)?, r.eval(row)?);
                if a.is_null() || b.is_null() {
                    Value::Null
                } else {
                    Value::Bool(cmp_holds(*op, a.try_cmp(&b)?))
                }
            }
            BoundExpr::And(children) => {
                let mut saw_null = false;
                for c in children {
                    match c.eval(row)? {
                        Value::Bool(false) => return Ok(Value::Bool(false)),
                        Value::Null => saw_null = true,
                        _ => {}
                    }
                }
                if saw_null {
                    Value::Null
                } else {
                    Value::Bool(true)
                }
            }
            BoundExpr::Or(children) => {
                let mut saw_null = false;
                for c in children {
                    match c.eval(row)? {
                        Value::Bool(true) => return Ok(Value::Bool(true)),
                        Value::Null => saw_null = true,
                        _ => {}
                    }
                }
                if saw_null {
                    Value::Null
                } else {
                    Value::Bool(false)
                }
            }
            BoundExpr::Not(c) => match c.eval(row)? {
                Value::Bool(b) => Value::Bool(!b),
                _ => Value::Null,
            },
            BoundExpr::If(c, t, e) => {
                if c.eval(row)? == Value::Bool(true) {
                    t.eval(row)?
                } else {
                    e.eval(row)?
                }
            }
            BoundExpr::Like(c, pattern) => match c.eval(row)? {
                Value::Str(s) => Value::Bool(pattern.matches(&s)),
                _ => Value::Null,
            },
            BoundExpr::StartsWith(c, prefix) => match c.eval(row)? {
                Value::Str(s) => Value::Bool(s.starts_with(prefix.as_str())),
                _ => Value::Null,
            },
            BoundExpr::IsNull(c) => Value::Bool(c.eval(row)?.is_null()),
            BoundExpr::InList(c, list) => {
                let v = c.eval(row)?;
                if v.is_null() {
                    Value::Null
                } else {
                    let mut hit = false;
                    for x in list {
                        if v.try_cmp(x)? == Ordering::Equal {
                            hit = true;
                            break;
                        }
                    }
                    Value::Bool(hit)
                }
            }
        })
    }

    /// Filter semantics: only `TRUE` passes.
    pub fn passes(&self, row: &[Value]) -> Result<bool> {
        Ok(self.eval(row)? == Value::Bool(true))
    }
}

pub(crate) fn cmp_holds(op: CmpOp, ord: Ordering) -> bool {
    match op {
        CmpOp::Lt => ord == Ordering::Less,
        CmpOp::LtEq => ord != Ordering::Greater,
        CmpOp::Eq => ord == Ordering::Equal,
        CmpOp::NotEq => ord != Ordering::Equal,
        CmpOp::GtEq => ord != Ordering::Less,
        CmpOp::Gt => ord == Ordering::Greater,
    }
}

fn arith(op: ArithOp, a: &Value, b: &Value) -> Result<Value> {
    if a.is_null() || b.is_null() {
        return Ok(Value::Null);
    }
    match (op, a, b) {
        (ArithOp::Div, _, _) => {
            let (x, y) = (num(a)?, num(b)?);
            Ok(if y == 0.0 {
                Value::Null
            } else {
                Value::Float(x / y)
            })
        }
        (_, Value::Int(x), Value::Int(y)) => {
            let r = match op {
                ArithOp::Add => x.checked_add(*y),
                ArithOp::Sub => x.checked_sub(*y),
                ArithOp::Mul => x.checked_mul(*y),
                ArithOp::Div => unreachable!(),
            };
            r.map(Value::Int).ok_or(Error::Overflow("integer arithmetic"))
        }
        _ => {
            let (x, y) = (num(a)?, num(b)?);
            Ok(Value::Float(match op {
                ArithOp::Add => x + y,
                ArithOp::Sub => x - y,
                ArithOp::Mul => x * y,
                ArithOp::Div => unreachable!(),
            }))
        }
    }
}

fn num(v: &Value) -> Result<f64> {
    v.as_f64()
        .ok_or_else(|| Error::Type(format!("arithmetic on non-numeric {v}")))
}

/// Evaluates `expr` against one row laid out per `schema`.
pub fn eval_row(expr: &Expr, schema: &Schema, row: &[Value]) -> Result<Value> {
    BoundExpr::bind(expr, schema)?.eval(row)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{col, if_then_else, lit};
    use crate::partition::Field;
    use crate::value::DataType;

    fn schema() -> Schema {
        Schema::new(vec![
            Field::new("unit", DataType::Utf8),
            Field::new("altit", DataType::Int64),
            Field::new("species", DataType::Utf8),
            Field::new("s", DataType::Int64),
        ])
    }

    #[test]
    fn feet_conversion() {
        let e = if_then_else(
            col("unit").eq(lit("feet")),
            col("altit").mul(lit(0.3048)),
            col("altit"),
        );
        let row = vec![lit_v("feet"), Value::Int(1000), Value::Null, Value::Null];
        match eval_row(&e, &schema(), &row).unwrap() {
            Value::Float(f) => assert!((f - 304.8).abs() < 1e-12),
            v => panic!("{v:?}"),
        }
        let row = vec![lit_v("meters"), Value::Int(1000), Value::Null, Value::Null];
        assert_eq!(eval_row(&e, &schema(), &row).unwrap(), Value::Int(1000));
    }

    fn lit_v(s: &str) -> Value {
        Value::from(s)
    }

    #[test]
    fn like_matches() {
        let e = col("species").like("Alpine%");
        let row = |s: &str| vec![Value::Null, Value::Null, lit_v(s), Value::Null];
        assert_eq!(eval_row(&e, &schema(), &row("Alpine Ibex")).unwrap(), Value::Bool(true));
        assert_eq!(eval_row(&e, &schema(), &row("Lynx")).unwrap(), Value::Bool(false));
        let p = LikePattern::parse("%bex").unwrap();
        assert!(p.matches("Alpine Ibex"));
        assert!(!p.matches("Alpine Ibexx"));
        assert!(LikePattern::parse("A_p%").unwrap().matches("Alpine"));
        assert_eq!(LikePattern::parse("ab").unwrap(), LikePattern::Exact("ab".into()));
        assert_eq!(LikePattern::parse("ab%").unwrap(), LikePattern::Prefix("ab".into()));
        assert_eq!(LikePattern::parse("ab%c").unwrap().prefix(), "ab");
    }

    #[test]
    fn null_semantics() {
        let row = vec![Value::Null, Value::Null, Value::Null, Value::Null];
        assert_eq!(eval_row(&col("s").gt_eq(lit(50)), &schema(), &row).unwrap(), Value::Null);
        let b = BoundExpr::bind(&col("s").gt_eq(lit(50)), &schema()).unwrap();
        assert!(!b.passes(&row).unwrap());
        assert_eq!(eval_row(&col("s").add(lit(1)), &schema(), &row).unwrap(), Value::Null);
        // FALSE AND NULL = FALSE, TRUE OR NULL = TRUE
        let f_and_n = crate::expr::and(vec![lit(false), col("s").gt(lit(1))]);
        assert_eq!(eval_row(&f_and_n, &schema(), &row).unwrap(), Value::Bool(false));
        let t_or_n = crate::expr::or(vec![col("s").gt(lit(1)), lit(true)]);
        assert_eq!(eval_row(&t_or_n, &schema(), &row).unwrap(), Value::Bool(true));
        assert_eq!(eval_row(&col("s").is_null(), &schema(), &row).unwrap(), Value::Bool(true));
    }

    #[test]
    fn division_and_overflow() {
        let row = vec![Value::Null, Value::Int(i64::MAX), Value::Null, Value::Int(0)];
        assert_eq!(eval_row(&col("altit").div(col("s")), &schema(), &row).unwrap(), Value::Null);
        assert!(matches!(
            eval_row(&col("altit").add(lit(1)), &schema(), &row),
            Err(Error::Overflow(_))
        ));
        assert_eq!(
            eval_row(&lit(7).div(lit(2)), &schema(), &row).unwrap(),
            Value::Float(3.5)
        );
    }
}
