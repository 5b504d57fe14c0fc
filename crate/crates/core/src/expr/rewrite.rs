use super::eval::LikePattern;
use super::{lit, Expr};
use crate::value::Value;

/// Pushes a negation down to the leaves (De Morgan, comparison inversion).
/// Equivalent to `NOT expr` under three-valued logic.
pub fn negate(expr: &Expr) -> Expr {
    match expr {
        Expr::Not { child } => (**child).clone(),
        Expr::Cmp { cmp, lhs, rhs } => Expr::Cmp {
            cmp: cmp.inverse(),
            lhs: lhs.clone(),
            rhs: rhs.clone(),
        },
        Expr::And { children } => Expr::Or {
            children: children.iter().map(negate).collect(),
        },
        Expr::Or { children } => Expr::And {
            children: children.iter().map(negate).collect(),
        },
        Expr::Literal {
            value: Value::Bool(b),
        } => lit(!b),
        Expr::Literal { value: Value::Null } => Expr::null(),
        Expr::If {
            cond,
            then,
            otherwise,
        } => Expr::If {
            cond: cond.clone(),
            then: Box::new(negate(then)),
            otherwise: Box::new(negate(otherwise)),
        },
        e => e.clone().not(),
    }
}

/// Weakens a predicate for pruning: the result is implied by the input, so
/// every row passing `predicate` also passes the rewrite.
///
/// `LIKE 'p%...'` becomes `STARTSWITH(col, 'p')`; a pattern without a
/// literal prefix becomes `TRUE` (no pruning power). Rewrites only descend
/// through AND/OR; under NOT a weaker child would make a stronger result.
pub fn widen_rewrite(predicate: &Expr) -> Expr {
    match predicate {
        Expr::And { children } => Expr::And {
            children: children.iter().map(widen_rewrite).collect(),
        },
        Expr::Or { children } => Expr::Or {
            children: children.iter().map(widen_rewrite).collect(),
        },
        Expr::Like { child, pattern } => match LikePattern::parse(pattern) {
            Ok(LikePattern::Exact(_)) | Err(_) => predicate.clone(),
            Ok(p) if p.prefix().is_empty() => lit(true),
            Ok(p) => Expr::StartsWith {
                child: child.clone(),
                prefix: p.prefix().to_string(),
            },
        },
        e => e.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{and, col, or};

    #[test]
    fn widening_examples() {
        assert_eq!(
            widen_rewrite(&col("name").like("Marked-%")),
            col("name").starts_with("Marked-")
        );
        assert_eq!(widen_rewrite(&col("name").like("%xyz")), lit(true));
        let s = col("s").gt_eq(lit(50));
        assert_eq!(widen_rewrite(&s), s);
        // nothing is widened underneath NOT
        let neg = col("name").like("Marked-%").not();
        assert_eq!(widen_rewrite(&neg), neg);
        assert_eq!(
            widen_rewrite(&and(vec![col("n").like("ab%c"), s.clone()])),
            and(vec![col("n").starts_with("ab"), s])
        );
    }

    #[test]
    fn negation_pushdown() {
        let e = and(vec![col("a").lt(lit(1)), col("b").like("x%")]);
        assert_eq!(
            negate(&e),
            or(vec![col("a").gt_eq(lit(1)), col("b").like("x%").not()])
        );
        assert_eq!(negate(&negate(&col("a").eq(lit(1)))), col("a").eq(lit(1)));
        assert_eq!(negate(&lit(true)), lit(false));
    }
}
