//! Table schema, typed rows, and the dataset container.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Kind of a table column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

impl std::fmt::Display for ColumnKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ColumnKind::Numeric => write!(f, "numeric"),
            ColumnKind::Categorical => write!(f, "categorical"),
        }
    }
}

/// Observed domain of a column: numeric (min, max) or the sorted list of
/// distinct categorical values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ColumnDomain {
    Numeric { min: f64, max: f64 },
    Categorical { values: Vec<String> },
}

/// A named feature column with its observed domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub domain: ColumnDomain,
}

impl ColumnSpec {
    pub fn numeric(name: impl Into<String>, min: f64, max: f64) -> Self {
        ColumnSpec {
            name: name.into(),
            domain: ColumnDomain::Numeric { min, max },
        }
    }

    pub fn categorical<S: Into<String>>(name: impl Into<String>, values: Vec<S>) -> Self {
        ColumnSpec {
            name: name.into(),
            domain: ColumnDomain::Categorical {
                values: values.into_iter().map(Into::into).collect(),
            },
        }
    }

    pub fn kind(&self) -> ColumnKind {
        match self.domain {
            ColumnDomain::Numeric { .. } => ColumnKind::Numeric,
            ColumnDomain::Categorical { .. } => ColumnKind::Categorical,
        }
    }
}

/// Target column: name plus the ordered class values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSpec {
    pub name: String,
    pub classes: Vec<String>,
}

/// Feature columns plus the label column of a table.
///
/// The label column is never part of `columns`; its class values index the
/// labels stored in a [`Dataset`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSchema {
    pub columns: Vec<ColumnSpec>,
    pub label: LabelSpec,
}

impl TableSchema {
    pub fn new(columns: Vec<ColumnSpec>, label: LabelSpec) -> Result<Self, SchemaError> {
        let schema = TableSchema { columns, label };
        schema.check()?;
        Ok(schema)
    }

    fn check(&self) -> Result<(), SchemaError> {
        for (i, col) in self.columns.iter().enumerate() {
            if self.columns[..i].iter().any(|c| c.name == col.name) {
                return Err(SchemaError::DuplicateColumn(col.name.clone()));
            }
            if col.name == self.label.name {
                return Err(SchemaError::LabelAmongFeatures(col.name.clone()));
            }
            match &col.domain {
                ColumnDomain::Numeric { min, max } => {
                    if min.is_nan() || max.is_nan() || min > max {
                        return Err(SchemaError::InvalidNumericDomain {
                            column: col.name.clone(),
                            min: *min,
                            max: *max,
                        });
                    }
                }
                ColumnDomain::Categorical { values } => {
                    if values.is_empty() {
                        return Err(SchemaError::EmptyCategoricalDomain(col.name.clone()));
                    }
                }
            }
        }
        if self.label.classes.len() < 2 {
            return Err(SchemaError::TooFewClasses(self.label.classes.len()));
        }
        Ok(())
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column(&self, name: &str) -> Option<&ColumnSpec> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn class_count(&self) -> usize {
        self.label.classes.len()
    }

    pub fn class_index(&self, value: &str) -> Option<usize> {
        self.label.classes.iter().position(|c| c == value)
    }
}

/// A single cell value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Value {
    Number(f64),
    Categorical(String),
}

impl Value {
    pub fn as_number(&self) -> Option<f64> {
        match self {
            Value::Number(x) => Some(*x),
            Value::Categorical(_) => None,
        }
    }

    pub fn as_categorical(&self) -> Option<&str> {
        match self {
            Value::Number(_) => None,
            Value::Categorical(s) => Some(s),
        }
    }
}

/// One table row, values ordered as the schema's feature columns.
pub type Row = Vec<Value>;

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("duplicate column name `{0}`")]
    DuplicateColumn(String),
    #[error("label column `{0}` also listed among feature columns")]
    LabelAmongFeatures(String),
    #[error("numeric domain of `{column}` has min {min} > max {max}")]
    InvalidNumericDomain { column: String, min: f64, max: f64 },
    #[error("categorical column `{0}` has an empty domain")]
    EmptyCategoricalDomain(String),
    #[error("need at least 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error("row {row} has {got} values, schema has {expected} feature columns")]
    RowArity {
        row: usize,
        got: usize,
        expected: usize,
    },
    #[error("row {row}, column `{column}`: expected a {expected} value")]
    ValueKind {
        row: usize,
        column: String,
        expected: ColumnKind,
    },
    #[error("label index {label} at row {row} out of range for {classes} classes")]
    LabelOutOfRange {
        row: usize,
        label: usize,
        classes: usize,
    },
    #[error("{rows} rows but {labels} labels")]
    LabelCount { rows: usize, labels: usize },
}

/// Immutable collection of rows (and optionally labels) under one schema.
///
/// `labels` holds class indices into `schema.label.classes`; an empty label
/// vector marks an unlabeled dataset (generator output, uniform samples).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    schema: TableSchema,
    rows: Vec<Row>,
    labels: Vec<usize>,
}

impl Dataset {
    pub fn new(
        schema: TableSchema,
        rows: Vec<Row>,
        labels: Vec<usize>,
    ) -> Result<Self, SchemaError> {
        if rows.len() != labels.len() {
            return Err(SchemaError::LabelCount {
                rows: rows.len(),
                labels: labels.len(),
            });
        }
        let ds = Dataset {
            schema,
            rows,
            labels,
        };
        ds.check_rows()?;
        Ok(ds)
    }

    pub fn unlabeled(schema: TableSchema, rows: Vec<Row>) -> Result<Self, SchemaError> {
        let ds = Dataset {
            schema,
            rows,
            labels: Vec::new(),
        };
        ds.check_rows()?;
        Ok(ds)
    }

    fn check_rows(&self) -> Result<(), SchemaError> {
        let m = self.schema.class_count();
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != self.schema.columns.len() {
                return Err(SchemaError::RowArity {
                    row: i,
                    got: row.len(),
                    expected: self.schema.columns.len(),
                });
            }
            for (value, col) in row.iter().zip(&self.schema.columns) {
                let ok = match col.kind() {
                    ColumnKind::Numeric => matches!(value, Value::Number(_)),
                    ColumnKind::Categorical => matches!(value, Value::Categorical(_)),
                };
                if !ok {
                    return Err(SchemaError::ValueKind {
                        row: i,
                        column: col.name.clone(),
                        expected: col.kind(),
                    });
                }
            }
        }
        for (i, &label) in self.labels.iter().enumerate() {
            if label >= m {
                return Err(SchemaError::LabelOutOfRange {
                    row: i,
                    label,
                    classes: m,
                });
            }
        }
        Ok(())
    }

    pub fn schema(&self) -> &TableSchema {
        &self.schema
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn is_labeled(&self) -> bool {
        !self.labels.is_empty() || self.rows.is_empty()
    }

    /// New dataset holding the rows at `indices`, order as given.
    /// Indices may repeat (bootstrap resampling).
    pub fn take(&self, indices: &[usize]) -> Dataset {
        let rows = indices.iter().map(|&i| self.rows[i].clone()).collect();
        let labels = if self.labels.is_empty() {
            Vec::new()
        } else {
            indices.iter().map(|&i| self.labels[i]).collect()
        };
        Dataset {
            schema: self.schema.clone(),
            rows,
            labels,
        }
    }

    /// Rows belonging to class `k`, order preserved.
    pub fn rows_of_class(&self, k: usize) -> Dataset {
        let indices: Vec<usize> = self
            .labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == k)
            .map(|(i, _)| i)
            .collect();
        self.take(&indices)
    }
}
