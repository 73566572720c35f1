//! Boolean concept predicates over table columns: parsing, validation,
//! evaluation, and dataset splitting.
//!
//! Grammar (keywords case-insensitive, `AND` binds tighter than `OR`,
//! `NOT` tighter than both):
//!
//! ```text
//! expr       := term ("OR" term)*
//! term       := factor ("AND" factor)*
//! factor     := "NOT" factor | "(" expr ")" | comparison
//! comparison := IDENT op literal        op ∈ { < <= > >= == != }
//! ```
//!
//! Identifiers are column names built from letters, digits, underscores and
//! hyphens. String literals are single- or double-quoted, without escapes.

mod eval;
mod parse;

use std::fmt;

pub use eval::{evaluate, split_dataset, validate, ValidateError};
pub use parse::{parse_predicate, ParseError};

/// Comparison operator in a predicate leaf.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompareOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl CompareOp {
    /// Ordering operators apply to numeric columns only.
    pub fn is_ordering(self) -> bool {
        matches!(
            self,
            CompareOp::Lt | CompareOp::Le | CompareOp::Gt | CompareOp::Ge
        )
    }
}

impl fmt::Display for CompareOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CompareOp::Lt => "<",
            CompareOp::Le => "<=",
            CompareOp::Gt => ">",
            CompareOp::Ge => ">=",
            CompareOp::Eq => "==",
            CompareOp::Ne => "!=",
        })
    }
}

/// Literal on the right-hand side of a comparison.
#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    /// Finite 64-bit float (the parser never produces NaN or infinities).
    Number(f64),
    Str(String),
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Number(x) => write!(f, "{x}"),
            // Prefer single quotes; fall back to double quotes when the
            // value itself contains one. There are no escapes, so a value
            // holding both quote kinds is unrepresentable (and unparseable
            // in the first place).
            Literal::Str(s) if s.contains('\'') => write!(f, "\"{s}\""),
            Literal::Str(s) => write!(f, "'{s}'"),
        }
    }
}

/// AST of a boolean concept predicate.
#[derive(Debug, Clone, PartialEq)]
pub enum Predicate {
    Comparison {
        column: String,
        op: CompareOp,
        literal: Literal,
    },
    And(Box<Predicate>, Box<Predicate>),
    Or(Box<Predicate>, Box<Predicate>),
    Not(Box<Predicate>),
}

impl Predicate {
    pub fn cmp(column: impl Into<String>, op: CompareOp, literal: Literal) -> Self {
        Predicate::Comparison {
            column: column.into(),
            op,
            literal,
        }
    }

    pub fn and(left: Predicate, right: Predicate) -> Self {
        Predicate::And(Box::new(left), Box::new(right))
    }

    pub fn or(left: Predicate, right: Predicate) -> Self {
        Predicate::Or(Box::new(left), Box::new(right))
    }

    // Deliberately shadows the `std::ops::Not` naming: this is a plain
    // constructor taking the child by value, and call sites read naturally
    // as `Predicate::not(inner)`.
    #[allow(clippy::should_implement_trait)]
    pub fn not(child: Predicate) -> Self {
        Predicate::Not(Box::new(child))
    }

    fn prec(&self) -> u8 {
        match self {
            Predicate::Or(..) => 1,
            Predicate::And(..) => 2,
            Predicate::Not(..) => 3,
            Predicate::Comparison { .. } => 4,
        }
    }

    fn fmt_with(&self, f: &mut fmt::Formatter<'_>, min_prec: u8) -> fmt::Result {
        let parens = self.prec() < min_prec;
        if parens {
            f.write_str("(")?;
        }
        match self {
            Predicate::Or(l, r) => {
                l.fmt_with(f, 1)?;
                f.write_str(" OR ")?;
                // One level above own precedence on the right keeps the
                // printed form left-associative, so reparsing rebuilds the
                // same tree.
                r.fmt_with(f, 2)?;
            }
            Predicate::And(l, r) => {
                l.fmt_with(f, 2)?;
                f.write_str(" AND ")?;
                r.fmt_with(f, 3)?;
            }
            Predicate::Not(c) => {
                f.write_str("NOT ")?;
                c.fmt_with(f, 3)?;
            }
            Predicate::Comparison {
                column,
                op,
                literal,
            } => write!(f, "{column} {op} {literal}")?,
        }
        if parens {
            f.write_str(")")?;
        }
        Ok(())
    }
}

/// Prints a canonical form that reparses to a structurally equal AST.
impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_with(f, 0)
    }
}
