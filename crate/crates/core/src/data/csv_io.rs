//! CSV ingestion with column-kind inference, and CSV export.

use std::io::Write;
use std::path::{Path, PathBuf};

use super::schema::{
    ColumnDomain, ColumnSpec, Dataset, LabelSpec, SchemaError, TableSchema, Value,
};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot open `{path}`: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed CSV in `{path}`: {source}")]
    Malformed { path: PathBuf, source: csv::Error },
    #[error("`{path}` line {line}: row has {got} fields, header has {expected}")]
    RaggedRow {
        path: PathBuf,
        line: u64,
        got: usize,
        expected: usize,
    },
    #[error("`{path}` line {line}: missing value in column `{column}`")]
    MissingValue {
        path: PathBuf,
        line: u64,
        column: String,
    },
    #[error("`{path}` has a header but no data rows")]
    Empty { path: PathBuf },
    #[error("label column `{0}` not found in header")]
    NoLabelColumn(String),
    #[error("label column `{0}` contains a single class")]
    SingleClass(String),
    #[error(transparent)]
    Schema(#[from] SchemaError),
}

/// Parse a CSV cell as a number. Only finite values count, so "NaN" and
/// "inf" stay categorical.
fn parse_finite(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|x| x.is_finite())
}

/// Load a headered CSV file, inferring column kinds.
///
/// A column is numeric when every one of its values parses as a finite
/// float; otherwise it is categorical with the sorted distinct values as
/// its domain. Missing (empty) fields are rejected. `label_column` names
/// the target; its sorted distinct values become the class list.
pub fn load_csv(path: impl AsRef<Path>, label_column: &str) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.to_owned(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file);

    let header: Vec<String> = reader
        .headers()
        .map_err(|source| DataError::Malformed {
            path: path.to_owned(),
            source,
        })?
        .iter()
        .map(str::to_owned)
        .collect();
    let label_idx = header
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| DataError::NoLabelColumn(label_column.to_owned()))?;

    let mut cells: Vec<Vec<String>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|source| DataError::Malformed {
            path: path.to_owned(),
            source,
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != header.len() {
            return Err(DataError::RaggedRow {
                path: path.to_owned(),
                line,
                got: record.len(),
                expected: header.len(),
            });
        }
        if let Some(col) = record.iter().position(|f| f.is_empty()) {
            return Err(DataError::MissingValue {
                path: path.to_owned(),
                line,
                column: header[col].clone(),
            });
        }
        cells.push(record.iter().map(str::to_owned).collect());
    }
    if cells.is_empty() {
        return Err(DataError::Empty {
            path: path.to_owned(),
        });
    }

    // Feature columns: numeric iff every value parses as a finite float.
    let mut columns = Vec::new();
    for (c, name) in header.iter().enumerate() {
        if c == label_idx {
            continue;
        }
        let parsed: Option<Vec<f64>> = cells.iter().map(|row| parse_finite(&row[c])).collect();
        let domain = match parsed {
            Some(nums) => {
                let min = nums.iter().copied().fold(f64::INFINITY, f64::min);
                let max = nums.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                ColumnDomain::Numeric { min, max }
            }
            None => {
                let mut values: Vec<String> = cells.iter().map(|row| row[c].clone()).collect();
                values.sort();
                values.dedup();
                ColumnDomain::Categorical { values }
            }
        };
        columns.push(ColumnSpec {
            name: name.clone(),
            domain,
        });
    }

    let mut classes: Vec<String> = cells.iter().map(|row| row[label_idx].clone()).collect();
    classes.sort();
    classes.dedup();
    if classes.len() < 2 {
        return Err(DataError::SingleClass(label_column.to_owned()));
    }

    let schema = TableSchema::new(
        columns,
        LabelSpec {
            name: label_column.to_owned(),
            classes: classes.clone(),
        },
    )?;

    let mut rows = Vec::with_capacity(cells.len());
    let mut labels = Vec::with_capacity(cells.len());
    for record in &cells {
        let mut row = Vec::with_capacity(header.len() - 1);
        for (c, field) in record.iter().enumerate() {
            if c == label_idx {
                labels.push(classes.iter().position(|k| k == field).unwrap());
            } else {
                let spec = &schema.columns[if c < label_idx { c } else { c - 1 }];
                row.push(match spec.domain {
                    ColumnDomain::Numeric { .. } => Value::Number(parse_finite(field).unwrap()),
                    ColumnDomain::Categorical { .. } => Value::Categorical(field.clone()),
                });
            }
        }
        rows.push(row);
    }

    Ok(Dataset::new(schema, rows, labels)?)
}

/// Write a dataset to CSV. Labeled datasets get the label as the final
/// column; unlabeled ones get features only. Numbers are printed with the
/// shortest representation that parses back to the same float, so a
/// write/load cycle reproduces values exactly.
pub fn write_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|source| DataError::Io {
        path: path.to_owned(),
        source,
    })?;
    let mut out = std::io::BufWriter::new(file);
    let schema = dataset.schema();
    let labeled = !dataset.labels().is_empty();

    let mut header: Vec<&str> = schema.columns.iter().map(|c| c.name.as_str()).collect();
    if labeled {
        header.push(&schema.label.name);
    }
    write_record(&mut out, path, &header)?;

    for (i, row) in dataset.rows().iter().enumerate() {
        let mut fields: Vec<String> = row
            .iter()
            .map(|v| match v {
                Value::Number(x) => x.to_string(),
                Value::Categorical(s) => s.clone(),
            })
            .collect();
        if labeled {
            fields.push(schema.label.classes[dataset.labels()[i]].clone());
        }
        let refs: Vec<&str> = fields.iter().map(String::as_str).collect();
        write_record(&mut out, path, &refs)?;
    }
    out.flush().map_err(|source| DataError::Io {
        path: path.to_owned(),
        source,
    })
}

fn write_record(out: &mut impl Write, path: &Path, fields: &[&str]) -> Result<(), DataError> {
    let line = fields
        .iter()
        .map(|f| quote_field(f))
        .collect::<Vec<_>>()
        .join(",");
    writeln!(out, "{line}").map_err(|source| DataError::Io {
        path: path.to_owned(),
        source,
    })
}

fn quote_field(field: &str) -> String {
    if field.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_owned()
    }
}
