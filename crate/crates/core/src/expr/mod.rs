//! Predicate and scalar expressions.
//!
//! An [`Expr`] can be evaluated two ways: exactly against a row
//! ([`eval_row`]) and conservatively against zone-map metadata
//! ([`derive_interval`], [`eval_meta`]). The metadata route must never
//! contradict the row route; that is the whole basis of pruning.

mod eval;
mod interval;
mod rewrite;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::Schema;
use crate::value::{DataType, Value};

pub use eval::{eval_row, BoundExpr, LikePattern};
pub use interval::{
    derive_interval, eval_meta, eval_meta_two_pass, outcomes, Interval, Outcomes, TriState,
};
pub use rewrite::{negate, widen_rewrite};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ArithOp {
    #[serde(rename = "+")]
    Add,
    #[serde(rename = "-")]
    Sub,
    #[serde(rename = "*")]
    Mul,
    #[serde(rename = "/")]
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CmpOp {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    LtEq,
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = "<>")]
    NotEq,
    #[serde(rename = ">=")]
    GtEq,
    #[serde(rename = ">")]
    Gt,
}

impl CmpOp {
    /// Operator `op'` with `NOT (a op b) == a op' b`.
    pub fn inverse(self) -> CmpOp {
        match self {
            CmpOp::Lt => CmpOp::GtEq,
            CmpOp::LtEq => CmpOp::Gt,
            CmpOp::Eq => CmpOp::NotEq,
            CmpOp::NotEq => CmpOp::Eq,
            CmpOp::GtEq => CmpOp::Lt,
            CmpOp::Gt => CmpOp::LtEq,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::LtEq => "<=",
            CmpOp::Eq => "=",
            CmpOp::NotEq => "<>",
            CmpOp::GtEq => ">=",
            CmpOp::Gt => ">",
        }
    }
}

impl ArithOp {
    pub fn symbol(self) -> &'static str {
        match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
            ArithOp::Div => "/",
        }
    }
}

/// Expression tree. Serializes as JSON objects discriminated by `"op"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Expr {
    Column {
        name: String,
    },
    Literal {
        value: Value,
    },
    Arith {
        fun: ArithOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    Cmp {
        cmp: CmpOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    And {
        children: Vec<Expr>,
    },
    Or {
        children: Vec<Expr>,
    },
    Not {
        child: Box<Expr>,
    },
    If {
        cond: Box<Expr>,
        then: Box<Expr>,
        #[serde(rename = "else")]
        otherwise: Box<Expr>,
    },
    Like {
        child: Box<Expr>,
        pattern: String,
    },
    StartsWith {
        child: Box<Expr>,
        prefix: String,
    },
    IsNull {
        child: Box<Expr>,
    },
    InList {
        child: Box<Expr>,
        list: Vec<Value>,
    },
}

pub fn col(name: impl Into<String>) -> Expr {
    Expr::Column { name: name.into() }
}

pub fn lit(value: impl Into<Value>) -> Expr {
    Expr::Literal {
        value: value.into(),
    }
}

pub fn and(children: Vec<Expr>) -> Expr {
    Expr::And { children }
}

pub fn or(children: Vec<Expr>) -> Expr {
    Expr::Or { children }
}

pub fn if_then_else(cond: Expr, then: Expr, otherwise: Expr) -> Expr {
    Expr::If {
        cond: Box::new(cond),
        then: Box::new(then),
        otherwise: Box::new(otherwise),
    }
}

impl Expr {
    pub fn null() -> Expr {
        Expr::Literal { value: Value::Null }
    }

    fn cmp(self, cmp: CmpOp, rhs: Expr) -> Expr {
        Expr::Cmp {
            cmp,
            lhs: Box::new(self),
            rhs: Box::new(rhs),
        }
    }

    pub fn compare(self, cmp: CmpOp, rhs: Expr) -> Expr {
        self.cmp(cmp, rhs)
    }

    pub fn lt(self, rhs: Expr) -> Expr {
        self.cmp(CmpOp::Lt, rhs)
    }
    pub fn lt_eq(self, rhs: Expr) -> Expr {
        self.cmp(CmpOp::LtEq, rhs)
    }
    pub fn eq(self, rhs: Expr) -> Expr {
        self.cmp(CmpOp::Eq, rhs)
    }
    pub fn not_eq(self, rhs: Expr) -> Expr {
        self.cmp(CmpOp::NotEq, rhs)
    }
    pub fn gt_eq(self, rhs: Expr) -> Expr {
        self.cmp(CmpOp::GtEq, rhs)
    }
    pub fn gt(self, rhs: Expr) -> Expr {
        self.cmp(CmpOp::Gt, rhs)
    }

    pub fn arith(self, fun: ArithOp, rhs: Expr) -> Expr {
        Expr::Arith {
            fun,
            lhs: Box::new(self),
            rhs: Box::new(rhs),
        }
    }

    pub fn add(self, rhs: Expr) -> Expr {
        self.arith(ArithOp::Add, rhs)
    }
    pub fn sub(self, rhs: Expr) -> Expr {
        self.arith(ArithOp::Sub, rhs)
    }
    pub fn mul(self, rhs: Expr) -> Expr {
        self.arith(ArithOp::Mul, rhs)
    }
    pub fn div(self, rhs: Expr) -> Expr {
        self.arith(ArithOp::Div, rhs)
    }

    pub fn not(self) -> Expr {
        Expr::Not {
            child: Box::new(self),
        }
    }

    pub fn like(self, pattern: impl Into<String>) -> Expr {
        Expr::Like {
            child: Box::new(self),
            pattern: pattern.into(),
        }
    }

    pub fn starts_with(self, prefix: impl Into<String>) -> Expr {
        Expr::StartsWith {
            child: Box::new(self),
            prefix: prefix.into(),
        }
    }

    pub fn is_null(self) -> Expr {
        Expr::IsNull {
            child: Box::new(self),
        }
    }

    pub fn in_list(self, list: Vec<Value>) -> Expr {
        Expr::InList {
            child: Box::new(self),
            list,
        }
    }

    pub fn children(&self) -> Vec<&Expr> {
        match self {
            Expr::Column { .. } | Expr::Literal { .. } => vec![],
            Expr::Arith { lhs, rhs, .. } | Expr::Cmp { lhs, rhs, .. } => vec![lhs, rhs],
            Expr::And { children } | Expr::Or { children } => children.iter().collect(),
            Expr::Not { child }
            | Expr::Like { child, .. }
            | Expr::StartsWith { child, .. }
            | Expr::IsNull { child }
            | Expr::InList { child, .. } => vec![child],
            Expr::If {
                cond,
                then,
                otherwise,
            } => vec![cond, then, otherwise],
        }
    }

    /// Number of nodes in the tree.
    pub fn node_count(&self) -> usize {
        1 + self.children().iter().map(|c| c.node_count()).sum::<usize>()
    }

    /// Column names referenced anywhere in the tree (with repeats).
    pub fn columns(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_columns(&mut out);
        out
    }

    fn collect_columns<'a>(&'a self, out: &mut Vec<&'a str>) {
        if let Expr::Column { name } = self {
            out.push(name);
        }
        for c in self.children() {
            c.collect_columns(out);
        }
    }

    /// Rewrites every column reference through `f`.
    pub fn map_columns(&self, f: &impl Fn(&str) -> String) -> Expr {
        let b = |e: &Expr| Box::new(e.map_columns(f));
        match self {
            Expr::Column { name } => Expr::Column { name: f(name) },
            Expr::Literal { .. } => self.clone(),
            Expr::Arith { fun, lhs, rhs } => Expr::Arith {
                fun: *fun,
                lhs: b(lhs),
                rhs: b(rhs),
            },
            Expr::Cmp { cmp, lhs, rhs } => Expr::Cmp {
                cmp: *cmp,
                lhs: b(lhs),
                rhs: b(rhs),
            },
            Expr::And { children } => Expr::And {
                children: children.iter().map(|c| c.map_columns(f)).collect(),
            },
            Expr::Or { children } => Expr::Or {
                children: children.iter().map(|c| c.map_columns(f)).collect(),
            },
            Expr::Not { child } => Expr::Not { child: b(child) },
            Expr::If {
                cond,
                then,
                otherwise,
            } => Expr::If {
                cond: b(cond),
                then: b(then),
                otherwise: b(otherwise),
            },
            Expr::Like { child, pattern } => Expr::Like {
                child: b(child),
                pattern: pattern.clone(),
            },
            Expr::StartsWith { child, prefix } => Expr::StartsWith {
                child: b(child),
                prefix: prefix.clone(),
            },
            Expr::IsNull { child } => Expr::IsNull { child: b(child) },
            Expr::InList { child, list } => Expr::InList {
                child: b(child),
                list: list.clone(),
            },
        }
    }

    /// Splits nested ANDs into a flat conjunct list.
    pub fn conjuncts(&self) -> Vec<&Expr> {
        match self {
            Expr::And { children } => children.iter().flat_map(|c| c.conjuncts()).collect(),
            e => vec![e],
        }
    }

    /// Inverse of [`Expr::conjuncts`]; `None` for an empty list.
    pub fn conjunction(mut parts: Vec<Expr>) -> Option<Expr> {
        match parts.len() {
            0 => None,
            1 => parts.pop(),
            _ => Some(Expr::And { children: parts }),
        }
    }

    pub fn is_true_literal(&self) -> bool {
        matches!(self, Expr::Literal { value: Value::Bool(true) })
    }

    /// Result type under `schema`; rejects ill-typed trees.
    pub fn data_type(&self, schema: &Schema) -> Result<DataType> {
        let ty = |e: &Expr| e.data_type(schema);
        let want_bool = |e: &Expr, what: &str| -> Result<()> {
            match ty(e)? {
                DataType::Bool | DataType::Null => Ok(()),
                t => Err(Error::Type(format!("{what} expects bool, got {t} in {e}"))),
            }
        };
        let want_str = |e: &Expr| -> Result<()> {
            match ty(e)? {
                DataType::Utf8 | DataType::Null => Ok(()),
                t => Err(Error::Type(format!("string function applied to {t} in {e}"))),
            }
        };
        match self {
            Expr::Column { name } => Ok(schema.columns[schema.resolve(name)?].data_type),
            Expr::Literal { value } => Ok(value.data_type()),
            Expr::Arith { fun, lhs, rhs } => {
                let (l, r) = (ty(lhs)?, ty(rhs)?);
                let numeric = |t: DataType| t.is_numeric() || t == DataType::Null;
                if !numeric(l) || !numeric(r) {
                    return Err(Error::Type(format!("arithmetic on {l} and {r} in {self}")));
                }
                Ok(
                    if *fun == ArithOp::Div
                        || l == DataType::Float64
                        || r == DataType::Float64
                    {
                        DataType::Float64
                    } else if l == DataType::Null && r == DataType::Null {
                        DataType::Null
                    } else {
                        DataType::Int64
                    },
                )
            }
            Expr::Cmp { lhs, rhs, .. } => {
                let (l, r) = (ty(lhs)?, ty(rhs)?);
                if !l.comparable_with(r) {
                    return Err(Error::Type(format!("cannot compare {l} with {r} in {self}")));
                }
                Ok(DataType::Bool)
            }
            Expr::And { children } | Expr::Or { children } => {
                if children.is_empty() {
                    return Err(Error::Type("empty AND/OR".into()));
                }
                for c in children {
                    want_bool(c, "AND/OR")?;
                }
                Ok(DataType::Bool)
            }
            Expr::Not { child } => {
                want_bool(child, "NOT")?;
                Ok(DataType::Bool)
            }
            Expr::If {
                cond,
                then,
                otherwise,
            } => {
                want_bool(cond, "IF condition")?;
                let (a, b) = (ty(then)?, ty(otherwise)?);
                if !a.comparable_with(b) {
                    return Err(Error::Type(format!("IF branches {a} and {b} differ")));
                }
                Ok(match (a, b) {
                    (DataType::Null, t) | (t, DataType::Null) => t,
                    (x, y) if x == y => x,
                    _ => DataType::Float64,
                })
            }
            Expr::Like { child, pattern } => {
                want_str(child)?;
                LikePattern::parse(pattern)?;
                Ok(DataType::Bool)
            }
            Expr::StartsWith { child, .. } => {
                want_str(child)?;
                Ok(DataType::Bool)
            }
            Expr::IsNull { .. } => Ok(DataType::Bool),
            Expr::InList { child, list } => {
                let t = ty(child)?;
                for v in list {
                    if v.is_null() {
                        return Err(Error::Type("NULL inside IN list".into()));
                    }
                    if !t.comparable_with(v.data_type()) {
                        return Err(Error::Type(format!("IN list value {v} does not match {t}")));
                    }
                }
                Ok(DataType::Bool)
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |f: &mut fmt::Formatter<'_>, children: &[Expr], sep: &str| -> fmt::Result {
            write!(f, "(")?;
            for (i, c) in children.iter().enumerate() {
                if i > 0 {
                    write!(f, " {sep} ")?;
                }
                write!(f, "{c}")?;
            }
            write!(f, ")")
        };
        let quote = |s: &str| format!("'{}'", s.replace('\'', "''"));
        match self {
            Expr::Column { name } => write!(f, "{name}"),
            Expr::Literal { value } => write!(f, "{value}"),
            Expr::Arith { fun, lhs, rhs } => write!(f, "({lhs} {} {rhs})", fun.symbol()),
            Expr::Cmp { cmp, lhs, rhs } => write!(f, "{lhs} {} {rhs}", cmp.symbol()),
            Expr::And { children } => join(f, children, "AND"),
            Expr::Or { children } => join(f, children, "OR"),
            Expr::Not { child } => write!(f, "NOT ({child})"),
            Expr::If {
                cond,
                then,
                otherwise,
            } => write!(f, "IF({cond}, {then}, {otherwise})"),
            Expr::Like { child, pattern } => write!(f, "{child} LIKE {}", quote(pattern)),
            Expr::StartsWith { child, prefix } => {
                write!(f, "STARTSWITH({child}, {})", quote(prefix))
            }
            Expr::IsNull { child } => write!(f, "{child} IS NULL"),
            Expr::InList { child, list } => {
                write!(f, "{child} IN (")?;
                for (i, v) in list.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{v}")?;
                }
                write!(f, ")")
            }
        }
    }
}
