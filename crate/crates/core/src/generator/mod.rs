//! A lightweight tabular generative model — KDE marginals tied together by
//! a Gaussian copula — and the two concept-example synthesis procedures
//! built on it: per-side generators fitted on predicate splits, and global
//! generation with rejection routing.

mod linalg;
mod marginal;

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::data::{ColumnDomain, Dataset, Row, TableSchema, Value};
use crate::predicate::{evaluate, split_dataset, validate, Predicate, ValidateError};
use linalg::{cholesky_with_jitter, nearest_psd_correlation};
use marginal::{average_ranks, FreqMarginal, KdeMarginal};

/// Minimum rows to fit a generator — below this, density estimation is
/// noise.
pub const MIN_FIT_ROWS: usize = 50;

/// Rejection-sampling budget of [`concept_examples_p2`], as a multiple of
/// `n_per_side`.
pub const P2_BUDGET_FACTOR: usize = 100;

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("need at least {need} rows to fit a generator, got {got}")]
    TooFewRows { got: usize, need: usize },
    #[error("{side} side of `{predicate}` has {got} natural rows; need at least {need}")]
    InsufficientSide {
        side: &'static str,
        predicate: String,
        got: usize,
        need: usize,
    },
    #[error(
        "sampling budget of {budget} draws exhausted for `{predicate}`: collected {positives} \
         positive and {negatives} negative examples of {requested} requested per side"
    )]
    BudgetExhausted {
        predicate: String,
        budget: usize,
        requested: usize,
        positives: usize,
        negatives: usize,
    },
    #[error(transparent)]
    Predicate(#[from] ValidateError),
}

#[derive(Debug, Clone)]
enum Marginal {
    Kde(KdeMarginal),
    Freq(FreqMarginal),
}

/// Fitted generative model: independent per-column marginals plus a
/// Gaussian copula over their rank-transformed values. Immutable once
/// fitted; sampling with distinct seeds is safe concurrently.
#[derive(Debug, Clone)]
pub struct GenerativeModel {
    schema: TableSchema,
    marginals: Vec<Marginal>,
    correlation: Array2<f64>,
    chol: Array2<f64>,
}

fn correlation_from_scores(z: &Array2<f64>) -> Array2<f64> {
    let (n, d) = z.dim();
    let means: Vec<f64> = (0..d).map(|c| z.column(c).sum() / n as f64).collect();
    let sds: Vec<f64> = (0..d)
        .map(|c| {
            (z.column(c)
                .iter()
                .map(|v| (v - means[c]).powi(2))
                .sum::<f64>()
                / n as f64)
                .sqrt()
        })
        .collect();
    let mut r = Array2::eye(d);
    for i in 0..d {
        for j in i + 1..d {
            let v = if sds[i] > 1e-12 && sds[j] > 1e-12 {
                let cov = z
                    .column(i)
                    .iter()
                    .zip(z.column(j).iter())
                    .map(|(a, b)| (a - means[i]) * (b - means[j]))
                    .sum::<f64>()
                    / n as f64;
                (cov / (sds[i] * sds[j])).clamp(-1.0, 1.0)
            } else {
                0.0
            };
            r[(i, j)] = v;
            r[(j, i)] = v;
        }
    }
    r
}

/// Fit the generative model on natural data. Deterministic given the data.
pub fn fit_generator(ds: &Dataset) -> Result<GenerativeModel, GeneratorError> {
    if ds.len() < MIN_FIT_ROWS {
        return Err(GeneratorError::TooFewRows {
            got: ds.len(),
            need: MIN_FIT_ROWS,
        });
    }
    let n = ds.len();
    let d = ds.schema().columns.len();
    let normal = Normal::new(0.0, 1.0).unwrap();

    let mut marginals = Vec::with_capacity(d);
    let mut z = Array2::zeros((n, d));
    for (c, col) in ds.schema().columns.iter().enumerate() {
        match col.domain {
            ColumnDomain::Numeric { .. } => {
                let xs: Vec<f64> = ds
                    .rows()
                    .iter()
                    .map(|r| r[c].as_number().expect("schema-checked"))
                    .collect();
                // Normal scores from average ranks: u = rank / (n + 1).
                for (i, rank) in average_ranks(&xs).into_iter().enumerate() {
                    z[(i, c)] = normal.inverse_cdf(rank / (n as f64 + 1.0));
                }
                marginals.push(Marginal::Kde(KdeMarginal::fit(&xs)));
            }
            ColumnDomain::Categorical { .. } => {
                let vs: Vec<&str> = ds
                    .rows()
                    .iter()
                    .map(|r| r[c].as_categorical().expect("schema-checked"))
                    .collect();
                let freq = FreqMarginal::fit(&vs);
                for (i, v) in vs.iter().enumerate() {
                    let mid = freq.midpoint_of(v).expect("value came from fit data");
                    z[(i, c)] = normal.inverse_cdf(mid);
                }
                marginals.push(Marginal::Freq(freq));
            }
        }
    }

    let correlation = nearest_psd_correlation(&correlation_from_scores(&z));
    let chol = cholesky_with_jitter(&correlation);
    Ok(GenerativeModel {
        schema: ds.schema().clone(),
        marginals,
        correlation,
        chol,
    })
}

impl GenerativeModel {
    pub fn schema(&self) -> &TableSchema {
        &self.schema
    }

    /// The copula's (repaired) correlation matrix, column order as the
    /// schema.
    pub fn correlation(&self) -> &Array2<f64> {
        &self.correlation
    }

    /// Interval a numeric column's samples are confined to:
    /// (min − 3·bandwidth, max + 3·bandwidth) of the fitted values.
    pub fn numeric_support(&self, column: &str) -> Option<(f64, f64)> {
        let idx = self.schema.column_index(column)?;
        match &self.marginals[idx] {
            Marginal::Kde(kde) => Some(kde.support()),
            Marginal::Freq(_) => None,
        }
    }

    fn sample_row(&self, rng: &mut ChaCha8Rng, normal: &Normal) -> Row {
        let d = self.marginals.len();
        let e = Array1::from_iter((0..d).map(|_| StandardNormal.sample(rng)));
        let correlated = self.chol.dot(&e);
        self.marginals
            .iter()
            .zip(correlated.iter())
            .map(|(marginal, &zc)| {
                let u = normal.cdf(zc);
                match marginal {
                    Marginal::Kde(kde) => Value::Number(kde.quantile(u)),
                    Marginal::Freq(freq) => Value::Categorical(freq.quantile(u).to_owned()),
                }
            })
            .collect()
    }

    fn sample_with_rng(&self, n: usize, rng: &mut ChaCha8Rng) -> Dataset {
        let normal = Normal::new(0.0, 1.0).unwrap();
        let rows: Vec<Row> = (0..n).map(|_| self.sample_row(rng, &normal)).collect();
        Dataset::unlabeled(self.schema.clone(), rows).expect("sampled rows conform")
    }
}

/// Draw `n` unlabeled rows from the fitted model; deterministic given
/// `seed`.
pub fn sample(gen: &GenerativeModel, n: usize, seed: u64) -> Dataset {
    assert!(n >= 1, "n must be >= 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    gen.sample_with_rng(n, &mut rng)
}

/// Which synthesis procedure produced a set of concept examples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Procedure {
    /// One generator per predicate side, no re-filtering.
    P1,
    /// One global generator with rejection routing.
    P2,
}

impl std::fmt::Display for Procedure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Procedure::P1 => write!(f, "p1"),
            Procedure::P2 => write!(f, "p2"),
        }
    }
}

/// Synthesized concept examples plus the provenance recorded in sidecar
/// metadata.
#[derive(Debug, Clone)]
pub struct ConceptExamples {
    pub positives: Dataset,
    pub negatives: Dataset,
    pub procedure: Procedure,
    pub predicate_text: String,
    pub seed: u64,
    /// Total rows drawn from the underlying generator(s).
    pub n_draws: usize,
    /// Fraction of returned positives actually satisfying the predicate
    /// (1.0 by construction for rejection routing).
    pub positive_satisfaction_rate: f64,
    /// Fraction of returned negatives actually violating it.
    pub negative_violation_rate: f64,
}

fn satisfaction_rate(pred: &Predicate, ds: &Dataset, want: bool) -> f64 {
    let hits = ds
        .rows()
        .iter()
        .filter(|row| evaluate(pred, row, ds.schema()) == want)
        .count();
    hits as f64 / ds.len() as f64
}

/// Per-side synthesis: fit one generator on the predicate's natural
/// satisfiers and one on the violators, then sample each. The samples are
/// *not* re-filtered — each conditional generator is taken as the model of
/// its side, and the achieved satisfaction rate is reported instead.
pub fn concept_examples_p1(
    ds: &Dataset,
    pred: &Predicate,
    n_per_side: usize,
    seed: u64,
) -> Result<ConceptExamples, GeneratorError> {
    assert!(n_per_side >= 1, "n_per_side must be >= 1");
    validate(pred, ds.schema())?;
    let (pos_nat, neg_nat) = split_dataset(pred, ds);
    for (side, part) in [("positive", &pos_nat), ("negative", &neg_nat)] {
        if part.len() < MIN_FIT_ROWS {
            return Err(GeneratorError::InsufficientSide {
                side,
                predicate: pred.to_string(),
                got: part.len(),
                need: MIN_FIT_ROWS,
            });
        }
    }
    let gen_pos = fit_generator(&pos_nat)?;
    let gen_neg = fit_generator(&neg_nat)?;

    // Independent streams of one seed keep the two sides decoupled.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    let positives = gen_pos.sample_with_rng(n_per_side, &mut rng);
    rng.set_stream(1);
    let negatives = gen_neg.sample_with_rng(n_per_side, &mut rng);

    Ok(ConceptExamples {
        positive_satisfaction_rate: satisfaction_rate(pred, &positives, true),
        negative_violation_rate: satisfaction_rate(pred, &negatives, false),
        positives,
        negatives,
        procedure: Procedure::P1,
        predicate_text: pred.to_string(),
        seed,
        n_draws: 2 * n_per_side,
    })
}

/// Global synthesis: fit one generator on all of `ds` and route each drawn
/// row by the predicate until both sides hold `n_per_side` rows. Every
/// returned positive satisfies the predicate exactly and every negative
/// violates it. Draws are capped at `P2_BUDGET_FACTOR · n_per_side`.
pub fn concept_examples_p2(
    ds: &Dataset,
    pred: &Predicate,
    n_per_side: usize,
    seed: u64,
) -> Result<ConceptExamples, GeneratorError> {
    assert!(n_per_side >= 1, "n_per_side must be >= 1");
    validate(pred, ds.schema())?;
    let gen = fit_generator(ds)?;
    let budget = P2_BUDGET_FACTOR * n_per_side;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut pos_rows: Vec<Row> = Vec::with_capacity(n_per_side);
    let mut neg_rows: Vec<Row> = Vec::with_capacity(n_per_side);
    let mut draws = 0;
    while (pos_rows.len() < n_per_side || neg_rows.len() < n_per_side) && draws < budget {
        let row = gen.sample_row(&mut rng, &normal);
        draws += 1;
        if evaluate(pred, &row, gen.schema()) {
            if pos_rows.len() < n_per_side {
                pos_rows.push(row);
            }
        } else if neg_rows.len() < n_per_side {
            neg_rows.push(row);
        }
    }
    if pos_rows.len() < n_per_side || neg_rows.len() < n_per_side {
        return Err(GeneratorError::BudgetExhausted {
            predicate: pred.to_string(),
            budget,
            requested: n_per_side,
            positives: pos_rows.len(),
            negatives: neg_rows.len(),
        });
    }

    let schema = gen.schema().clone();
    Ok(ConceptExamples {
        positives: Dataset::unlabeled(schema.clone(), pos_rows).expect("sampled rows conform"),
        negatives: Dataset::unlabeled(schema, neg_rows).expect("sampled rows conform"),
        procedure: Procedure::P2,
        predicate_text: pred.to_string(),
        seed,
        n_draws: draws,
        positive_satisfaction_rate: 1.0,
        negative_violation_rate: 1.0,
    })
}
