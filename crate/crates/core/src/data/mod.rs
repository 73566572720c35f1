//! Tabular data: schemas, datasets, CSV I/O, encoding, synthetic data, and
//! demographic parity.

mod csv_io;
mod encode;
mod parity;
mod schema;
mod synth;

pub use csv_io::{load_csv, write_csv, DataError};
pub use encode::{EncodeError, EncodedFeature, EncodedMatrix, Encoder};
pub use parity::{demographic_parity, protected_column, ParityError};
pub use schema::{
    ColumnDomain, ColumnKind, ColumnSpec, Dataset, LabelSpec, Row, SchemaError, TableSchema, Value,
};
pub use synth::{
    gen_biased_income, gen_xor_synthetic, uniform_sample, SynthError, INCOME_GROUP_A,
    INCOME_GROUP_B, INCOME_POSITIVE_CLASS, INCOME_PROTECTED_COLUMN,
};
