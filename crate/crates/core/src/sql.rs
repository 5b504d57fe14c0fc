//! A small SQL subset:
//!
//! ```text
//! SELECT items FROM table [alias]
//!   [[INNER | LEFT [OUTER]] JOIN table [alias] ON col = col]
//!   [WHERE expr] [GROUP BY col, ...]
//!   [ORDER BY expr [ASC | DESC]] [LIMIT k [OFFSET n]] [;]
//! ```
//!
//! Expressions cover arithmetic, comparisons, `AND`/`OR`/`NOT`, `LIKE`,
//! `IN (...)`, `BETWEEN`, `IS [NOT] NULL`, `IF(c, a, b)`,
//! `STARTS_WITH(x, 'p')` and the aggregates `COUNT`, `SUM`, `MIN`, `MAX`.

use crate::error::{Error, Result};
use crate::expr::{ArithOp, CmpOp, Expr};
use crate::plan::{AggFunc, Aggregate, Catalog, Direction, JoinKind, NamedExpr, Plan};
use crate::value::Value;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Float(f64),
    Str(String),
    Sym(&'static str),
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    start: usize,
    end: usize,
}

const SYMBOLS: [&str; 15] = [
    "<=", ">=", "<>", "!=", "=", "<", ">", "(", ")", ",", "*", "+", "-", "/", ";",
];

const RESERVED: [&str; 27] = [
    "SELECT", "FROM", "WHERE", "GROUP", "BY", "ORDER", "ASC", "DESC", "LIMIT", "OFFSET", "JOIN",
    "INNER", "LEFT", "OUTER", "ON", "AND", "OR", "NOT", "LIKE", "IN", "IS", "NULL", "TRUE",
    "FALSE", "AS", "BETWEEN", "IF",
];

fn syntax_error(text: &str, start: usize, end: usize, message: impl Into<String>) -> Error {
    let before = &text[..start];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(start, |i| start - i - 1) + 1;
    Error::Syntax {
        line,
        column,
        span: (start, end),
        message: message.into(),
    }
}

fn lex(text: &str) -> Result<Vec<Token>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if c == b'-' && bytes.get(i + 1) == Some(&b'-') {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        let tok = if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || matches!(bytes[i], b'_' | b'.')) {
                i += 1;
            }
            Tok::Ident(text[start..i].to_string())
        } else if c == b'"' {
            i += 1;
            while i < bytes.len() && bytes[i] != b'"' {
                i += 1;
            }
            if i == bytes.len() {
                return Err(syntax_error(text, start, i, "unterminated quoted identifier"));
            }
            i += 1;
            Tok::Ident(text[start + 1..i - 1].to_string())
        } else if c.is_ascii_digit() || (c == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            let mut float = false;
            if i < bytes.len() && bytes[i] == b'.' {
                float = true;
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < bytes.len() && matches!(bytes[i], b'e' | b'E') {
                float = true;
                i += 1;
                if i < bytes.len() && matches!(bytes[i], b'+' | b'-') {
                    i += 1;
                }
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
            }
            let s = &text[start..i];
            let bad = || syntax_error(text, start, i, format!("bad number '{s}'"));
            if float {
                Tok::Float(s.parse().map_err(|_| bad())?)
            } else {
                Tok::Int(s.parse().map_err(|_| bad())?)
            }
        } else if c == b'\'' {
            let mut s = String::new();
            i += 1;
            loop {
                match text[i..].find('\'') {
                    None => return Err(syntax_error(text, start, text.len(), "unterminated string")),
                    Some(j) => {
                        s.push_str(&text[i..i + j]);
                        i += j + 1;
                        if bytes.get(i) == Some(&b'\'') {
                            s.push('\'');
                            i += 1;
                        } else {
                            break;
                        }
                    }
                }
            }
            Tok::Str(s)
        } else if let Some(sym) = SYMBOLS.iter().find(|s| text[i..].starts_with(**s)) {
            i += sym.len();
            Tok::Sym(sym)
        } else {
            let ch = text[i..].chars().next().expect("in bounds");
            return Err(syntax_error(text, i, i + ch.len_utf8(), format!("unexpected character '{ch}'")));
        };
        out.push(Token { tok, start, end: i });
    }
    out.push(Token {
        tok: Tok::Eof,
        start: text.len(),
        end: text.len(),
    });
    Ok(out)
}

/// Parsed expression, before aggregates are split off.
#[derive(Debug, Clone, PartialEq)]
enum Ast {
    Column(String),
    Literal(Value),
    Arith(ArithOp, Box<Ast>, Box<Ast>),
    Cmp(CmpOp, Box<Ast>, Box<Ast>),
    And(Vec<Ast>),
    Or(Vec<Ast>),
    Not(Box<Ast>),
    If(Box<Ast>, Box<Ast>, Box<Ast>),
    Like(Box<Ast>, String),
    StartsWith(Box<Ast>, String),
    IsNull(Box<Ast>),
    InList(Box<Ast>, Vec<Value>),
    Agg(AggFunc, Option<Box<Ast>>),
}

#[derive(Debug, Clone)]
enum SelectItem {
    Star,
    Expr(Ast, Option<String>, String),
}

#[derive(Debug, Clone)]
struct TableRef {
    name: String,
    alias: Option<String>,
}

#[derive(Debug, Clone)]
struct Select {
    items: Vec<SelectItem>,
    from: TableRef,
    join: Option<(JoinKind, TableRef, String, String)>,
    filter: Option<Ast>,
    group_by: Vec<String>,
    order: Option<(Ast, Direction)>,
    limit: Option<(usize, usize)>,
}

struct Parser<'a> {
    text: &'a str,
    toks: Vec<Token>,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn advance(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if t.tok != Tok::Eof {
            self.pos += 1;
        }
        t
    }

    fn error_here(&self, message: impl Into<String>) -> Error {
        let t = self.peek();
        syntax_error(self.text, t.start, t.end, message)
    }

    fn describe(t: &Tok) -> String {
        match t {
            Tok::Ident(s) => format!("'{s}'"),
            Tok::Int(i) => i.to_string(),
            Tok::Float(f) => f.to_string(),
            Tok::Str(s) => format!("'{s}'"),
            Tok::Sym(s) => format!("'{s}'"),
            Tok::Eof => "end of input".into(),
        }
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(s) if s.eq_ignore_ascii_case(kw))
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        let hit = self.is_kw(kw);
        if hit {
            self.advance();
        }
        hit
    }

    fn expect_kw(&mut self, kw: &str) -> Result<()> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            let found = Self::describe(&self.peek().tok);
            Err(self.error_here(format!("expected {kw}, found {found}")))
        }
    }

    fn eat_sym(&mut self, sym: &str) -> bool {
        let hit = matches!(self.peek().tok, Tok::Sym(s) if s == sym);
        if hit {
            self.advance();
        }
        hit
    }

    fn expect_sym(&mut self, sym: &str) -> Result<()> {
        if self.eat_sym(sym) {
            Ok(())
        } else {
            let found = Self::describe(&self.peek().tok);
            Err(self.error_here(format!("expected '{sym}', found {found}")))
        }
    }

    fn ident(&mut self, what: &str) -> Result<String> {
        match &self.peek().tok {
            Tok::Ident(s) if !RESERVED.iter().any(|r| s.eq_ignore_ascii_case(r)) => {
                let s = s.clone();
                self.advance();
                Ok(s)
            }
            t => {
                let found = Self::describe(t);
                Err(self.error_here(format!("expected {what}, found {found}")))
            }
        }
    }

    fn count(&mut self, what: &str) -> Result<usize> {
        match self.peek().tok {
            Tok::Int(n) if n >= 0 => {
                self.advance();
                Ok(n as usize)
            }
            _ => Err(self.error_here(format!("expected a non-negative integer {what}"))),
        }
    }

    fn select(&mut self) -> Result<Select> {
        self.expect_kw("SELECT")?;
        let mut items = Vec::new();
        loop {
            if self.eat_sym("*") {
                items.push(SelectItem::Star);
            } else {
                let start = self.peek().start;
                let e = self.expr()?;
                let text = self.text[start..self.toks[self.pos - 1].end].to_string();
                let bare_alias = |p: &Self| matches!(p.peek().tok, Tok::Ident(_)) && !p.is_reserved();
                let alias = if self.eat_kw("AS") || bare_alias(self) {
                    Some(self.ident("alias")?)
                } else {
                    None
                };
                items.push(SelectItem::Expr(e, alias, text));
            }
            if !self.eat_sym(",") {
                break;
            }
        }
        self.expect_kw("FROM")?;
        let from = self.table_ref()?;
        let mut join = None;
        let kind = if self.eat_kw("LEFT") {
            self.eat_kw("OUTER");
            self.expect_kw("JOIN")?;
            Some(JoinKind::LeftOuter)
        } else if self.eat_kw("INNER") {
            self.expect_kw("JOIN")?;
            Some(JoinKind::Inner)
        } else if self.eat_kw("JOIN") {
            Some(JoinKind::Inner)
        } else {
            None
        };
        if let Some(kind) = kind {
            let right = self.table_ref()?;
            self.expect_kw("ON")?;
            let a = self.ident("join column")?;
            self.expect_sym("=")?;
            let b = self.ident("join column")?;
            join = Some((kind, right, a, b));
        }
        let filter = if self.eat_kw("WHERE") {
            Some(self.expr()?)
        } else {
            None
        };
        let mut group_by = Vec::new();
        if self.eat_kw("GROUP") {
            self.expect_kw("BY")?;
            loop {
                group_by.push(self.ident("group column")?);
                if !self.eat_sym(",") {
                    break;
                }
            }
        }
        let mut order = None;
        if self.eat_kw("ORDER") {
            self.expect_kw("BY")?;
            let e = self.expr()?;
            let dir = if self.eat_kw("DESC") {
                Direction::Desc
            } else {
                self.eat_kw("ASC");
                Direction::Asc
            };
            order = Some((e, dir));
        }
        let mut limit = None;
        if self.eat_kw("LIMIT") {
            let k = self.count("after LIMIT")?;
            let offset = if self.eat_kw("OFFSET") {
                self.count("after OFFSET")?
            } else {
                0
            };
            limit = Some((k, offset));
        }
        self.eat_sym(";");
        if self.peek().tok != Tok::Eof {
            let found = Self::describe(&self.peek().tok);
            return Err(self.error_here(format!("unexpected {found}")));
        }
        Ok(Select {
            items,
            from,
            join,
            filter,
            group_by,
            order,
            limit,
        })
    }

    fn is_reserved(&self) -> bool {
        matches!(&self.peek().tok, Tok::Ident(s) if RESERVED.iter().any(|r| s.eq_ignore_ascii_case(r)))
    }

    fn table_ref(&mut self) -> Result<TableRef> {
        let name = self.ident("table name")?;
        let alias = if self.eat_kw("AS") || (matches!(self.peek().tok, Tok::Ident(_)) && !self.is_reserved()) {
            Some(self.ident("alias")?)
        } else {
            None
        };
        Ok(TableRef { name, alias })
    }

    fn expr(&mut self) -> Result<Ast> {
        let mut parts = vec![self.and_expr()?];
        while self.eat_kw("OR") {
            parts.push(self.and_expr()?);
        }
        Ok(if parts.len() == 1 {
            parts.pop().expect("one part")
        } else {
            Ast::Or(parts)
        })
    }

    fn and_expr(&mut self) -> Result<Ast> {
        let mut parts = vec![self.not_expr()?];
        while self.eat_kw("AND") {
            parts.push(self.not_expr()?);
        }
        Ok(if parts.len() == 1 {
            parts.pop().expect("one part")
        } else {
            Ast::And(parts)
        })
    }

    fn not_expr(&mut self) -> Result<Ast> {
        if self.eat_kw("NOT") {
            return Ok(Ast::Not(Box::new(self.not_expr()?)));
        }
        self.predicate()
    }

    fn string(&mut self, what: &str) -> Result<String> {
        match &self.peek().tok {
            Tok::Str(s) => {
                let s = s.clone();
                self.advance();
                Ok(s)
            }
            _ => Err(self.error_here(format!("expected a string {what}"))),
        }
    }

    fn predicate(&mut self) -> Result<Ast> {
        let lhs = self.additive()?;
        let cmp = match self.peek().tok {
            Tok::Sym("=") => Some(CmpOp::Eq),
            Tok::Sym("!=") | Tok::Sym("<>") => Some(CmpOp::NotEq),
            Tok::Sym("<") => Some(CmpOp::Lt),
            Tok::Sym("<=") => Some(CmpOp::LtEq),
            Tok::Sym(">") => Some(CmpOp::Gt),
            Tok::Sym(">=") => Some(CmpOp::GtEq),
            _ => None,
        };
        if let Some(cmp) = cmp {
            self.advance();
            let rhs = self.additive()?;
            return Ok(Ast::Cmp(cmp, Box::new(lhs), Box::new(rhs)));
        }
        if self.eat_kw("IS") {
            let neg = self.eat_kw("NOT");
            self.expect_kw("NULL")?;
            let e = Ast::IsNull(Box::new(lhs));
            return Ok(if neg { Ast::Not(Box::new(e)) } else { e });
        }
        let neg = self.eat_kw("NOT");
        let e = if self.eat_kw("LIKE") {
            Ast::Like(Box::new(lhs), self.string("pattern after LIKE")?)
        } else if self.eat_kw("IN") {
            self.expect_sym("(")?;
            let mut list = Vec::new();
            loop {
                list.push(self.literal_value()?);
                if !self.eat_sym(",") {
                    break;
                }
            }
            self.expect_sym(")")?;
            Ast::InList(Box::new(lhs), list)
        } else if self.eat_kw("BETWEEN") {
            let lo = self.additive()?;
            self.expect_kw("AND")?;
            let hi = self.additive()?;
            Ast::And(vec![
                Ast::Cmp(CmpOp::GtEq, Box::new(lhs.clone()), Box::new(lo)),
                Ast::Cmp(CmpOp::LtEq, Box::new(lhs), Box::new(hi)),
            ])
        } else if neg {
            return Err(self.error_here("expected LIKE, IN or BETWEEN after NOT"));
        } else {
            return Ok(lhs);
        };
        Ok(if neg { Ast::Not(Box::new(e)) } else { e })
    }

    fn literal_value(&mut self) -> Result<Value> {
        let neg = self.eat_sym("-");
        let v = match self.peek().tok.clone() {
            Tok::Int(i) => Value::Int(if neg { -i } else { i }),
            Tok::Float(f) => Value::Float(if neg { -f } else { f }),
            Tok::Str(s) if !neg => Value::Str(s),
            Tok::Ident(s) if !neg && s.eq_ignore_ascii_case("TRUE") => Value::Bool(true),
            Tok::Ident(s) if !neg && s.eq_ignore_ascii_case("FALSE") => Value::Bool(false),
            Tok::Ident(s) if !neg && s.eq_ignore_ascii_case("NULL") => Value::Null,
            _ => return Err(self.error_here("expected a literal")),
        };
        self.advance();
        Ok(v)
    }

    fn additive(&mut self) -> Result<Ast> {
        let mut lhs = self.multiplicative()?;
        loop {
            let op = if self.eat_sym("+") {
                ArithOp::Add
            } else if self.eat_sym("-") {
                ArithOp::Sub
            } else {
                return Ok(lhs);
            };
            lhs = Ast::Arith(op, Box::new(lhs), Box::new(self.multiplicative()?));
        }
    }

    fn multiplicative(&mut self) -> Result<Ast> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat_sym("*") {
                ArithOp::Mul
            } else if self.eat_sym("/") {
                ArithOp::Div
            } else {
                return Ok(lhs);
            };
            lhs = Ast::Arith(op, Box::new(lhs), Box::new(self.unary()?));
        }
    }

    fn unary(&mut self) -> Result<Ast> {
        if self.eat_sym("-") {
            return Ok(match self.unary()? {
                Ast::Literal(Value::Int(i)) => Ast::Literal(Value::Int(-i)),
                Ast::Literal(Value::Float(f)) => Ast::Literal(Value::Float(-f)),
                e => Ast::Arith(ArithOp::Sub, Box::new(Ast::Literal(Value::Int(0))), Box::new(e)),
            });
        }
        self.primary()
    }

    fn call_args(&mut self, n: usize) -> Result<Vec<Ast>> {
        self.expect_sym("(")?;
        let mut args = vec![self.expr()?];
        while args.len() < n {
            self.expect_sym(",")?;
            args.push(self.expr()?);
        }
        self.expect_sym(")")?;
        Ok(args)
    }

    fn primary(&mut self) -> Result<Ast> {
        let t = self.peek().clone();
        match &t.tok {
            Tok::Int(_) | Tok::Float(_) | Tok::Str(_) => Ok(Ast::Literal(self.literal_value()?)),
            Tok::Sym("(") => {
                self.advance();
                let e = self.expr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Tok::Ident(s) => {
                let upper = s.to_ascii_uppercase();
                match upper.as_str() {
                    "TRUE" | "FALSE" | "NULL" => Ok(Ast::Literal(self.literal_value()?)),
                    "IF" => {
                        self.advance();
                        let mut a = self.call_args(3)?.into_iter();
                        let (c, x, y) = (a.next(), a.next(), a.next());
                        Ok(Ast::If(
                            Box::new(c.expect("3 args")),
                            Box::new(x.expect("3 args")),
                            Box::new(y.expect("3 args")),
                        ))
                    }
                    "STARTS_WITH" => {
                        self.advance();
                        self.expect_sym("(")?;
                        let e = self.expr()?;
                        self.expect_sym(",")?;
                        let p = self.string("prefix")?;
                        self.expect_sym(")")?;
                        Ok(Ast::StartsWith(Box::new(e), p))
                    }
                    "COUNT" | "SUM" | "MIN" | "MAX"
                        if matches!(self.toks[self.pos + 1].tok, Tok::Sym("(")) =>
                    {
                        self.advance();
                        let func = match upper.as_str() {
                            "COUNT" => AggFunc::Count,
                            "SUM" => AggFunc::Sum,
                            "MIN" => AggFunc::Min,
                            _ => AggFunc::Max,
                        };
                        self.expect_sym("(")?;
                        if func == AggFunc::Count && self.eat_sym("*") {
                            self.expect_sym(")")?;
                            return Ok(Ast::Agg(func, None));
                        }
                        let e = self.expr()?;
                        self.expect_sym(")")?;
                        Ok(Ast::Agg(func, Some(Box::new(e))))
                    }
                    _ if RESERVED.contains(&upper.as_str()) => {
                        Err(self.error_here(format!("unexpected keyword {upper}")))
                    }
                    _ => {
                        self.advance();
                        Ok(Ast::Column(s.clone()))
                    }
                }
            }
            other => {
                let found = Self::describe(other);
                Err(self.error_here(format!("expected an expression, found {found}")))
            }
        }
    }
}

fn agg_name(func: AggFunc, arg: Option<&Ast>) -> String {
    let f = match func {
        AggFunc::Count => "count",
        AggFunc::Sum => "sum",
        AggFunc::Min => "min",
        AggFunc::Max => "max",
    };
    match arg {
        None => format!("{f}(*)"),
        Some(a) => format!("{f}({})", lower(a).map_or_else(|_| "?".into(), |e| e.to_string())),
    }
}

/// Converts an aggregate-free expression.
fn lower(ast: &Ast) -> Result<Expr> {
    lower_with(ast, &mut |_, _| Err(Error::Bind("aggregate not allowed here".into())))
}

fn lower_with(ast: &Ast, agg: &mut dyn FnMut(AggFunc, Option<&Ast>) -> Result<Expr>) -> Result<Expr> {
    let mut go = |a: &Ast| lower_with(a, agg);
    Ok(match ast {
        Ast::Column(n) => Expr::Column { name: n.clone() },
        Ast::Literal(v) => Expr::Literal { value: v.clone() },
        Ast::Arith(op, l, r) => go(l)?.arith(*op, go(r)?),
        Ast::Cmp(op, l, r) => go(l)?.compare(*op, go(r)?),
        Ast::And(c) => Expr::And {
            children: c.iter().map(&mut go).collect::<Result<_>>()?,
        },
        Ast::Or(c) => Expr::Or {
            children: c.iter().map(&mut go).collect::<Result<_>>()?,
        },
        Ast::Not(c) => go(c)?.not(),
        Ast::If(c, t, e) => crate::expr::if_then_else(go(c)?, go(t)?, go(e)?),
        Ast::Like(c, p) => go(c)?.like(p.clone()),
        Ast::StartsWith(c, p) => go(c)?.starts_with(p.clone()),
        Ast::IsNull(c) => go(c)?.is_null(),
        Ast::InList(c, l) => go(c)?.in_list(l.clone()),
        Ast::Agg(f, a) => agg(*f, a.as_deref())?,
    })
}

fn has_agg(ast: &Ast) -> bool {
    match ast {
        Ast::Agg(..) => true,
        Ast::Column(_) | Ast::Literal(_) => false,
        Ast::Arith(_, l, r) | Ast::Cmp(_, l, r) => has_agg(l) || has_agg(r),
        Ast::And(c) | Ast::Or(c) => c.iter().any(has_agg),
        Ast::If(a, b, c) => has_agg(a) || has_agg(b) || has_agg(c),
        Ast::Not(c) | Ast::Like(c, _) | Ast::StartsWith(c, _) | Ast::IsNull(c) | Ast::InList(c, _) => {
            has_agg(c)
        }
    }
}

/// Parses `text` into an unbound query.
fn parse(text: &str) -> Result<Select> {
    let mut p = Parser {
        text,
        toks: lex(text)?,
        pos: 0,
    };
    p.select()
}

/// Checks the syntax of `text` without a catalog.
pub fn check_syntax(text: &str) -> Result<()> {
    parse(text).map(|_| ())
}

fn scan(t: &TableRef) -> Plan {
    Plan::Scan {
        table: t.name.clone(),
        alias: t.alias.clone(),
    }
}

/// Parses and binds `text` against `catalog`.
///
/// Plans have the shape Scan → Filter → [GroupBy] → [TopK] → [Limit] →
/// [Project]. `ORDER BY ... LIMIT k OFFSET n` becomes a top-k of `k + n`
/// followed by a Limit; `ORDER BY` without `LIMIT` sorts everything. An
/// inner join builds on the table with fewer rows; a left join builds on
/// (preserves) the left table. WHERE conjuncts that touch one join input
/// only are pushed below the join where that keeps the result.
pub fn parse_sql(text: &str, catalog: &Catalog) -> Result<Plan> {
    let q = parse(text)?;
    let mut conjuncts: Vec<Expr> = match &q.filter {
        Some(f) => lower(f)?.conjuncts().into_iter().cloned().collect(),
        None => vec![],
    };
    conjuncts.retain(|c| !c.is_true_literal());

    let mut plan = match &q.join {
        None => {
            catalog.table(&q.from.name)?;
            let p = scan(&q.from);
            match Expr::conjunction(conjuncts) {
                Some(f) => p.filter(f),
                None => p,
            }
        }
        Some((kind, right, a, b)) => {
            let (lt, rt) = (catalog.table(&q.from.name)?, catalog.table(&right.name)?);
            let ls = scan(&q.from).schema(catalog)?;
            let rs = scan(right).schema(catalog)?;
            let in_l = |c: &str| ls.resolve(c).is_ok();
            let in_r = |c: &str| rs.resolve(c).is_ok();
            let side_of = |c: &str| match (in_l(c), in_r(c)) {
                (true, false) => Ok(0),
                (false, true) => Ok(1),
                (true, true) => Err(Error::Bind(format!("ambiguous join column '{c}'"))),
                (false, false) => Err(Error::Bind(format!("unknown column '{c}'"))),
            };
            let (lkey, rkey) = match (side_of(a)?, side_of(b)?) {
                (0, 1) => (a, b),
                (1, 0) => (b, a),
                _ => {
                    return Err(Error::Bind(
                        "join condition must compare one column from each table".into(),
                    ))
                }
            };
            let left_builds = *kind == JoinKind::LeftOuter || lt.num_rows() <= rt.num_rows();
            let (mut lp, mut rp) = (vec![], vec![]);
            let mut rest = vec![];
            for c in conjuncts {
                let cols = c.columns();
                let only = |f: &dyn Fn(&str) -> bool| !cols.is_empty() && cols.iter().all(|n| f(n));
                if only(&|n| in_l(n) && !in_r(n)) {
                    lp.push(c);
                } else if only(&|n| in_r(n) && !in_l(n)) && *kind == JoinKind::Inner {
                    rp.push(c);
                } else {
                    rest.push(c);
                }
            }
            let side = |t: &TableRef, preds: Vec<Expr>| match Expr::conjunction(preds) {
                Some(f) => scan(t).filter(f),
                None => scan(t),
            };
            let (l, r) = (side(&q.from, lp), side(right, rp));
            let (lk, rk) = (Expr::Column { name: lkey.clone() }, Expr::Column { name: rkey.clone() });
            let joined = if left_builds {
                Plan::join(*kind, l, r, lk, rk)
            } else {
                Plan::join(*kind, r, l, rk, lk)
            };
            match Expr::conjunction(rest) {
                Some(f) => joined.filter(f),
                None => joined,
            }
        }
    };

    let items: Vec<&SelectItem> = q.items.iter().collect();
    let grouped = !q.group_by.is_empty()
        || items
            .iter()
            .any(|i| matches!(i, SelectItem::Expr(e, ..) if has_agg(e)))
        || q.order.as_ref().is_some_and(|(e, _)| has_agg(e));

    // select aliases usable in ORDER BY
    let alias_of = |name: &str| {
        items.iter().find_map(|i| match i {
            SelectItem::Expr(e, Some(a), _) if a == name => Some(e.clone()),
            _ => None,
        })
    };
    let order_ast = q.order.as_ref().map(|(e, d)| {
        let e = match e {
            Ast::Column(n) if plan.schema(catalog).map_or(true, |s| s.resolve(n).is_err()) => {
                alias_of(n).unwrap_or_else(|| e.clone())
            }
            _ => e.clone(),
        };
        (e, *d)
    });

    let mut project: Option<Vec<NamedExpr>> = None;
    let order: Option<(Expr, Direction)>;
    if grouped {
        let mut aggregates: Vec<Aggregate> = Vec::new();
        let mut collect = |f: AggFunc, a: Option<&Ast>, alias: Option<&String>| -> Result<Expr> {
            let arg = a.map(lower).transpose()?;
            if let Some(existing) = aggregates.iter().find(|x| x.func == f && x.arg == arg) {
                return Ok(Expr::Column {
                    name: existing.name.clone(),
                });
            }
            let name = alias.cloned().unwrap_or_else(|| agg_name(f, a));
            aggregates.push(Aggregate {
                func: f,
                arg,
                name: name.clone(),
            });
            Ok(Expr::Column { name })
        };
        let mut exprs = Vec::new();
        for item in &items {
            match item {
                SelectItem::Star => {
                    return Err(Error::Bind("SELECT * is not allowed with GROUP BY".into()))
                }
                SelectItem::Expr(Ast::Agg(f, a), alias, _) => {
                    let e = collect(*f, a.as_deref(), alias.as_ref())?;
                    let name = alias.clone().unwrap_or_else(|| agg_name(*f, a.as_deref()));
                    exprs.push(NamedExpr::new(e, name));
                }
                SelectItem::Expr(e, alias, text) => {
                    let lowered = lower_with(e, &mut |f, a| collect(f, a, None))?;
                    exprs.push(NamedExpr::new(lowered, alias.clone().unwrap_or_else(|| text.clone())));
                }
            }
        }
        order = order_ast
            .map(|(e, d)| Ok::<_, Error>((lower_with(&e, &mut |f, a| collect(f, a, None))?, d)))
            .transpose()?;
        let keys = q
            .group_by
            .iter()
            .map(|k| NamedExpr::new(Expr::Column { name: k.clone() }, k.clone()))
            .collect();
        plan = plan.group_by(keys, aggregates);
        project = Some(exprs);
    } else {
        order = order_ast.map(|(e, d)| Ok::<_, Error>((lower(&e)?, d))).transpose()?;
        if !items.iter().any(|i| matches!(i, SelectItem::Star)) {
            project = Some(
                items
                    .iter()
                    .map(|i| match i {
                        SelectItem::Expr(e, alias, text) => {
                            Ok(NamedExpr::new(lower(e)?, alias.clone().unwrap_or_else(|| text.clone())))
                        }
                        SelectItem::Star => unreachable!(),
                    })
                    .collect::<Result<_>>()?,
            );
        } else if items.len() > 1 {
            return Err(Error::Bind("'*' cannot be combined with other select items".into()));
        }
    }

    match (order, q.limit) {
        (Some((e, d)), Some((k, 0))) => plan = plan.top_k(e, d, k),
        (Some((e, d)), Some((k, off))) => plan = plan.top_k(e, d, k.saturating_add(off)).limit(k, off),
        (Some((e, d)), None) => plan = plan.top_k(e, d, usize::MAX),
        (None, Some((k, off))) => plan = plan.limit(k, off),
        (None, None) => {}
    }
    if let Some(exprs) = project {
        let identity = match plan.schema(catalog) {
            Ok(s) => {
                exprs.len() == s.len()
                    && exprs.iter().zip(&s.columns).all(
                        |(e, f)| matches!(&e.expr, Expr::Column { name } if *name == f.name && e.name == f.name),
                    )
            }
            Err(_) => false,
        };
        if !identity {
            plan = plan.project(exprs);
        }
    }
    plan.schema(catalog)?;
    Ok(plan)
}
