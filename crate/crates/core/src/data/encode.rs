//! Encoding of typed rows into the float matrix a model consumes:
//! z-scored numerics (statistics from the fitted data) and one-hot
//! categoricals.

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::schema::{ColumnDomain, ColumnKind, Dataset, Row, TableSchema};

#[derive(Debug, Error)]
pub enum EncodeError {
    #[error("cannot fit an encoder on an empty dataset")]
    EmptyFit,
    #[error(
        "schema mismatch: expected column `{expected}` at position {position}, found `{found}`"
    )]
    ColumnMismatch {
        position: usize,
        expected: String,
        found: String,
    },
    #[error("column `{column}`: expected a {expected} value")]
    KindMismatch {
        column: String,
        expected: ColumnKind,
    },
    #[error("column `{column}`: value `{value}` not seen when the encoder was fitted")]
    UnknownCategory { column: String, value: String },
    #[error("row has {got} values, encoder was fitted on {expected} columns")]
    Arity { got: usize, expected: usize },
}

/// How one schema column maps into encoded feature dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum ColumnEncoding {
    /// (value - mean) / std, one output dimension.
    ZScore { mean: f64, std: f64 },
    /// One output dimension per known value, exactly one of them 1.
    OneHot { values: Vec<String> },
}

/// Identity of a single encoded feature dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedFeature {
    /// Schema column this dimension came from.
    pub column: String,
    /// For one-hot dimensions, the categorical value this dimension indicates.
    pub value: Option<String>,
}

/// Fitted encoding map from rows to `f64` vectors.
///
/// Standardization statistics come from the dataset passed to [`Encoder::fit`]
/// (the training split); encoding other data reuses them unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    names: Vec<String>,
    encodings: Vec<ColumnEncoding>,
    dim: usize,
}

impl Encoder {
    pub fn fit(ds: &Dataset) -> Result<Encoder, EncodeError> {
        if ds.is_empty() {
            return Err(EncodeError::EmptyFit);
        }
        let mut names = Vec::new();
        let mut encodings = Vec::new();
        let mut dim = 0;
        for (c, col) in ds.schema().columns.iter().enumerate() {
            names.push(col.name.clone());
            match &col.domain {
                ColumnDomain::Numeric { .. } => {
                    let xs: Vec<f64> = ds
                        .rows()
                        .iter()
                        .map(|r| r[c].as_number().expect("checked at construction"))
                        .collect();
                    let n = xs.len() as f64;
                    let mean = xs.iter().sum::<f64>() / n;
                    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
                    let std = var.sqrt();
                    // Constant columns encode to 0 rather than dividing by 0.
                    let std = if std > 0.0 { std } else { 1.0 };
                    encodings.push(ColumnEncoding::ZScore { mean, std });
                    dim += 1;
                }
                ColumnDomain::Categorical { values } => {
                    encodings.push(ColumnEncoding::OneHot {
                        values: values.clone(),
                    });
                    dim += values.len();
                }
            }
        }
        Ok(Encoder {
            names,
            encodings,
            dim,
        })
    }

    /// Encoded dimensionality n.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Identity of every encoded dimension, in order — the inverse of the
    /// encoding map down to column granularity.
    pub fn features(&self) -> Vec<EncodedFeature> {
        let mut out = Vec::with_capacity(self.dim);
        for (name, enc) in self.names.iter().zip(&self.encodings) {
            match enc {
                ColumnEncoding::ZScore { .. } => out.push(EncodedFeature {
                    column: name.clone(),
                    value: None,
                }),
                ColumnEncoding::OneHot { values } => {
                    for v in values {
                        out.push(EncodedFeature {
                            column: name.clone(),
                            value: Some(v.clone()),
                        });
                    }
                }
            }
        }
        out
    }

    /// Check that `schema`'s feature columns line up with what the encoder
    /// was fitted on (names, order, kinds).
    pub fn check_schema(&self, schema: &TableSchema) -> Result<(), EncodeError> {
        if schema.columns.len() != self.names.len() {
            return Err(EncodeError::Arity {
                got: schema.columns.len(),
                expected: self.names.len(),
            });
        }
        for (i, (col, name)) in schema.columns.iter().zip(&self.names).enumerate() {
            if &col.name != name {
                return Err(EncodeError::ColumnMismatch {
                    position: i,
                    expected: name.clone(),
                    found: col.name.clone(),
                });
            }
            let expected_kind = match self.encodings[i] {
                ColumnEncoding::ZScore { .. } => ColumnKind::Numeric,
                ColumnEncoding::OneHot { .. } => ColumnKind::Categorical,
            };
            if col.kind() != expected_kind {
                return Err(EncodeError::KindMismatch {
                    column: name.clone(),
                    expected: expected_kind,
                });
            }
        }
        Ok(())
    }

    /// Encode one row into `out` (length must be `dim()`).
    pub fn encode_row_into(&self, row: &Row, out: &mut [f64]) -> Result<(), EncodeError> {
        if row.len() != self.names.len() {
            return Err(EncodeError::Arity {
                got: row.len(),
                expected: self.names.len(),
            });
        }
        debug_assert_eq!(out.len(), self.dim);
        let mut j = 0;
        for ((value, enc), name) in row.iter().zip(&self.encodings).zip(&self.names) {
            match enc {
                ColumnEncoding::ZScore { mean, std } => {
                    let x = value.as_number().ok_or_else(|| EncodeError::KindMismatch {
                        column: name.clone(),
                        expected: ColumnKind::Numeric,
                    })?;
                    out[j] = (x - mean) / std;
                    j += 1;
                }
                ColumnEncoding::OneHot { values } => {
                    let s = value
                        .as_categorical()
                        .ok_or_else(|| EncodeError::KindMismatch {
                            column: name.clone(),
                            expected: ColumnKind::Categorical,
                        })?;
                    let pos = values.iter().position(|v| v == s).ok_or_else(|| {
                        EncodeError::UnknownCategory {
                            column: name.clone(),
                            value: s.to_owned(),
                        }
                    })?;
                    for (k, slot) in out[j..j + values.len()].iter_mut().enumerate() {
                        *slot = if k == pos { 1.0 } else { 0.0 };
                    }
                    j += values.len();
                }
            }
        }
        Ok(())
    }

    pub fn encode_row(&self, row: &Row) -> Result<Vec<f64>, EncodeError> {
        let mut out = vec![0.0; self.dim];
        self.encode_row_into(row, &mut out)?;
        Ok(out)
    }

    pub fn encode(&self, ds: &Dataset) -> Result<EncodedMatrix, EncodeError> {
        self.check_schema(ds.schema())?;
        let mut matrix = Array2::zeros((ds.len(), self.dim));
        for (i, row) in ds.rows().iter().enumerate() {
            self.encode_row_into(row, matrix.row_mut(i).as_slice_mut().unwrap())?;
        }
        Ok(EncodedMatrix {
            matrix,
            encoder: self.clone(),
        })
    }
}

/// A dataset's rows as a float matrix, together with the map that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedMatrix {
    pub matrix: Array2<f64>,
    pub encoder: Encoder,
}

impl EncodedMatrix {
    pub fn n_rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }
}
