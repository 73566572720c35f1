//! Predicate validation against a schema, row evaluation, and dataset
//! splitting.

use thiserror::Error;

use super::{CompareOp, Literal, Predicate};
use crate::data::{ColumnKind, Dataset, Row, TableSchema, Value};

#[derive(Debug, Error, PartialEq)]
pub enum ValidateError {
    #[error("in `{node}`: unknown column `{column}`")]
    UnknownColumn { node: String, column: String },
    #[error(
        "in `{node}`: `{column}` is the label column; predicates range over feature columns only"
    )]
    LabelColumn { node: String, column: String },
    #[error(
        "in `{node}`: ordering operator `{op}` does not apply to categorical column `{column}`"
    )]
    OrderingOnCategorical {
        node: String,
        column: String,
        op: CompareOp,
    },
    #[error("in `{node}`: column `{column}` is {kind}, literal is not")]
    LiteralMismatch {
        node: String,
        column: String,
        kind: ColumnKind,
    },
}

/// Check every comparison leaf against the schema: the column must be a
/// feature column, ordering operators need numeric columns, and literals
/// must type-match.
pub fn validate(pred: &Predicate, schema: &TableSchema) -> Result<(), ValidateError> {
    match pred {
        Predicate::And(l, r) | Predicate::Or(l, r) => {
            validate(l, schema)?;
            validate(r, schema)
        }
        Predicate::Not(c) => validate(c, schema),
        Predicate::Comparison {
            column,
            op,
            literal,
        } => {
            let node = pred.to_string();
            let Some(spec) = schema.column(column) else {
                if *column == schema.label.name {
                    return Err(ValidateError::LabelColumn {
                        node,
                        column: column.clone(),
                    });
                }
                return Err(ValidateError::UnknownColumn {
                    node,
                    column: column.clone(),
                });
            };
            match (spec.kind(), literal) {
                (ColumnKind::Numeric, Literal::Number(_)) => Ok(()),
                (ColumnKind::Categorical, Literal::Str(_)) if !op.is_ordering() => Ok(()),
                (ColumnKind::Categorical, Literal::Str(_)) => {
                    Err(ValidateError::OrderingOnCategorical {
                        node,
                        column: column.clone(),
                        op: *op,
                    })
                }
                (kind, _) => Err(ValidateError::LiteralMismatch {
                    node,
                    column: column.clone(),
                    kind,
                }),
            }
        }
    }
}

/// Evaluate a validated predicate on a row conforming to `schema`.
///
/// Numeric comparisons are exact on the stored floats — `==` is float
/// equality, intended for integer-valued columns. Panics on predicates that
/// were never validated against this schema.
pub fn evaluate(pred: &Predicate, row: &Row, schema: &TableSchema) -> bool {
    match pred {
        Predicate::And(l, r) => evaluate(l, row, schema) && evaluate(r, row, schema),
        Predicate::Or(l, r) => evaluate(l, row, schema) || evaluate(r, row, schema),
        Predicate::Not(c) => !evaluate(c, row, schema),
        Predicate::Comparison {
            column,
            op,
            literal,
        } => {
            let idx = schema
                .column_index(column)
                .unwrap_or_else(|| panic!("unvalidated predicate: unknown column `{column}`"));
            match (&row[idx], literal) {
                (Value::Number(x), Literal::Number(lit)) => match op {
                    CompareOp::Lt => x < lit,
                    CompareOp::Le => x <= lit,
                    CompareOp::Gt => x > lit,
                    CompareOp::Ge => x >= lit,
                    CompareOp::Eq => x == lit,
                    CompareOp::Ne => x != lit,
                },
                (Value::Categorical(s), Literal::Str(lit)) => match op {
                    CompareOp::Eq => s == lit,
                    CompareOp::Ne => s != lit,
                    _ => panic!("unvalidated predicate: ordering on categorical `{column}`"),
                },
                _ => panic!("unvalidated predicate: literal type mismatch on `{column}`"),
            }
        }
    }
}

/// Partition a dataset into (satisfying, unsatisfying) rows, preserving
/// order on both sides.
pub fn split_dataset(pred: &Predicate, ds: &Dataset) -> (Dataset, Dataset) {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (i, row) in ds.rows().iter().enumerate() {
        if evaluate(pred, row, ds.schema()) {
            pos.push(i);
        } else {
            neg.push(i);
        }
    }
    (ds.take(&pos), ds.take(&neg))
}
