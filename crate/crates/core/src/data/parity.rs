//! Demographic Parity measurement over predicted labels.

use thiserror::Error;

use super::schema::{Dataset, Value};

#[derive(Debug, Error)]
pub enum ParityError {
    #[error("{predictions} predictions but {protected} protected values")]
    LengthMismatch {
        predictions: usize,
        protected: usize,
    },
    #[error("no rows with protected value `{0}`")]
    EmptyGroup(String),
    #[error("column `{0}` not found or not categorical")]
    BadProtectedColumn(String),
}

/// Demographic-parity gap ε = Pr[ŷ = positive | A = group_a] − Pr[ŷ = positive | A = group_b].
///
/// A value of 0 means parity; a negative value means predictions favor
/// `group_b`. Antisymmetric under swapping the groups.
pub fn demographic_parity<S: AsRef<str>>(
    predictions: &[usize],
    protected_values: &[S],
    group_a: &str,
    group_b: &str,
    positive_class: usize,
) -> Result<f64, ParityError> {
    if predictions.len() != protected_values.len() {
        return Err(ParityError::LengthMismatch {
            predictions: predictions.len(),
            protected: protected_values.len(),
        });
    }
    let rate = |group: &str| -> Result<f64, ParityError> {
        let mut n = 0u64;
        let mut positive = 0u64;
        for (pred, value) in predictions.iter().zip(protected_values) {
            if value.as_ref() == group {
                n += 1;
                positive += u64::from(*pred == positive_class);
            }
        }
        if n == 0 {
            return Err(ParityError::EmptyGroup(group.to_owned()));
        }
        Ok(positive as f64 / n as f64)
    };
    Ok(rate(group_a)? - rate(group_b)?)
}

/// Pull a categorical column out of a dataset for use as the protected
/// attribute A.
pub fn protected_column<'a>(ds: &'a Dataset, column: &str) -> Result<Vec<&'a str>, ParityError> {
    let idx = ds
        .schema()
        .column_index(column)
        .ok_or_else(|| ParityError::BadProtectedColumn(column.to_owned()))?;
    ds.rows()
        .iter()
        .map(|row| match &row[idx] {
            Value::Categorical(s) => Ok(s.as_str()),
            Value::Number(_) => Err(ParityError::BadProtectedColumn(column.to_owned())),
        })
        .collect()
}
