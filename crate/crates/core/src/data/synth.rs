//! Synthetic datasets: the XOR-of-signs task and a bias-controllable
//! income-like table, plus uniform sampling over a schema's domains.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use super::schema::{ColumnDomain, ColumnSpec, Dataset, LabelSpec, Row, TableSchema, Value};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error(
        "target_epsilon {epsilon} is infeasible: implied group rates ({rate_a:.3}, {rate_b:.3}) leave [0, 1]"
    )]
    InfeasibleEpsilon {
        epsilon: f64,
        rate_a: f64,
        rate_b: f64,
    },
}

fn observed_numeric_domain(rows: &[Row], col: usize) -> ColumnDomain {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for row in rows {
        let x = row[col].as_number().unwrap();
        min = min.min(x);
        max = max.max(x);
    }
    ColumnDomain::Numeric { min, max }
}

/// The XOR-of-signs task: ten i.i.d. standard-normal features X1..X10 and
/// label Y = 1 exactly when X1·X2 < 0. Each feature alone is independent of
/// Y; only the (X1, X2) sign pair carries signal. Rows with an exact zero
/// product are redrawn.
pub fn gen_xor_synthetic(n_samples: usize, seed: u64) -> Dataset {
    assert!(n_samples >= 1, "n_samples must be >= 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows: Vec<Row> = Vec::with_capacity(n_samples);
    let mut labels = Vec::with_capacity(n_samples);
    while rows.len() < n_samples {
        let xs: Vec<f64> = (0..10).map(|_| StandardNormal.sample(&mut rng)).collect();
        let product = xs[0] * xs[1];
        if product == 0.0 {
            continue;
        }
        labels.push(usize::from(product < 0.0));
        rows.push(xs.into_iter().map(Value::Number).collect());
    }

    let columns = (0..10)
        .map(|i| ColumnSpec {
            name: format!("X{}", i + 1),
            domain: observed_numeric_domain(&rows, i),
        })
        .collect();
    let schema = TableSchema::new(
        columns,
        LabelSpec {
            name: "Y".into(),
            classes: vec!["0".into(), "1".into()],
        },
    )
    .expect("static schema is valid");
    Dataset::new(schema, rows, labels).expect("generated rows conform")
}

pub const INCOME_PROTECTED_COLUMN: &str = "gender";
pub const INCOME_GROUP_A: &str = "Female";
pub const INCOME_GROUP_B: &str = "Male";
pub const INCOME_POSITIVE_CLASS: &str = ">50K";
const INCOME_BASE_RATE: f64 = 0.3;

const EDUCATION_VALUES: [&str; 5] = [
    "Bachelors",
    "Doctorate",
    "HS-grad",
    "Masters",
    "Some-college",
];
// Per-label education distributions, aligned with EDUCATION_VALUES.
const EDUCATION_WEIGHTS: [[f64; 5]; 2] = [
    [0.25, 0.02, 0.40, 0.08, 0.25], // <=50K
    [0.35, 0.10, 0.12, 0.28, 0.15], // >50K
];

fn sample_weighted(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// An income-like table with a dialable demographic-parity gap.
///
/// Columns: gender (balanced Female/Male), age, education (5 values),
/// hours-per-week; label <=50K / >50K. Positive rates are
/// 0.3 + ε/2 for Female and 0.3 − ε/2 for Male, so the population gap
/// Pr[>50K | Female] − Pr[>50K | Male] equals `target_epsilon`. The
/// non-protected features are drawn from label-conditional distributions
/// (shifted normals, tilted categorical weights) so the label is learnable
/// from them.
pub fn gen_biased_income(
    n_samples: usize,
    target_epsilon: f64,
    seed: u64,
) -> Result<Dataset, SynthError> {
    assert!(n_samples >= 1, "n_samples must be >= 1");
    let rate_a = INCOME_BASE_RATE + target_epsilon / 2.0;
    let rate_b = INCOME_BASE_RATE - target_epsilon / 2.0;
    if !(0.0..=1.0).contains(&rate_a) || !(0.0..=1.0).contains(&rate_b) {
        return Err(SynthError::InfeasibleEpsilon {
            epsilon: target_epsilon,
            rate_a,
            rate_b,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows: Vec<Row> = Vec::with_capacity(n_samples);
    let mut labels = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let female = rng.random::<f64>() < 0.5;
        let rate = if female { rate_a } else { rate_b };
        let y = usize::from(rng.random::<f64>() < rate);

        let z_age: f64 = StandardNormal.sample(&mut rng);
        let age = 38.0 + 8.0 * y as f64 + 10.0 * z_age;
        let z_hours: f64 = StandardNormal.sample(&mut rng);
        let hours = 40.0 + 6.0 * y as f64 + 8.0 * z_hours;
        let education = EDUCATION_VALUES[sample_weighted(&mut rng, &EDUCATION_WEIGHTS[y])];

        rows.push(vec![
            Value::Categorical(if female { "Female" } else { "Male" }.into()),
            Value::Number(age),
            Value::Categorical(education.into()),
            Value::Number(hours),
        ]);
        labels.push(y);
    }

    let columns = vec![
        ColumnSpec::categorical(
            INCOME_PROTECTED_COLUMN,
            vec![INCOME_GROUP_A, INCOME_GROUP_B],
        ),
        ColumnSpec {
            name: "age".into(),
            domain: observed_numeric_domain(&rows, 1),
        },
        ColumnSpec::categorical("education", EDUCATION_VALUES.to_vec()),
        ColumnSpec {
            name: "hours-per-week".into(),
            domain: observed_numeric_domain(&rows, 3),
        },
    ];
    let schema = TableSchema::new(
        columns,
        LabelSpec {
            name: "income".into(),
            classes: vec!["<=50K".into(), INCOME_POSITIVE_CLASS.into()],
        },
    )
    .expect("static schema is valid");
    Ok(Dataset::new(schema, rows, labels).expect("generated rows conform"))
}

/// Sample every column independently and uniformly over its domain:
/// numerics from Uniform(min, max), categoricals uniformly over their
/// distinct values. Returns an unlabeled dataset.
pub fn uniform_sample(schema: &TableSchema, n_samples: usize, seed: u64) -> Dataset {
    assert!(n_samples >= 1, "n_samples must be >= 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Row> = (0..n_samples)
        .map(|_| {
            schema
                .columns
                .iter()
                .map(|col| match &col.domain {
                    ColumnDomain::Numeric { min, max } => {
                        let x = if min == max {
                            *min
                        } else {
                            rng.random_range(*min..*max)
                        };
                        Value::Number(x)
                    }
                    ColumnDomain::Categorical { values } => {
                        Value::Categorical(values[rng.random_range(0..values.len())].clone())
                    }
                })
                .collect()
        })
        .collect();
    Dataset::unlabeled(schema.clone(), rows).expect("sampled rows conform")
}
